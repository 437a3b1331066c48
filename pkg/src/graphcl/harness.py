"""Class-incremental training loop, task/split machinery, and the accuracy metrics."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import DatasetBundle
from .gnn import (
    GnnModel,
    ModelConfig,
    adam_init,
    adam_step,
    class_mask,
    evaluate_accuracy,
    init_model,
    propagation_matrix,
)
from .graph import Graph, degree_vector, induced_subgraph
from .hodge import SolverConfig, hodge_potential_score
from .replay import buffer_stats, combined_loss, empty_buffer, update_buffer
from .scoring import (
    FusionConfig,
    baseline_scores,
    fuse_scores,
    grand_scores,
    minmax_normalize,
    select_deterministic,
    select_probabilistic,
    topo_scores,
)

TRAIN, VAL, TEST = 0, 1, 2

METHODS = ("ftf_er", "fine_tune", "joint", "random_replay", "mf_replay")
SAMPLERS = ("deterministic", "probabilistic")
HPS_SCOPES = ("task", "global")


@dataclass(frozen=True)
class Split:
    """Per-node role: 0 train, 1 val, 2 test; 6:2:2 per class with floored train/val."""

    roles: np.ndarray

    def nodes_with_role(self, role: int) -> np.ndarray:
        return np.flatnonzero(self.roles == role)


def split_nodes(labels, seed: int) -> Split:
    """Seeded per-class shuffle, then train = floor(0.6 m), val = floor(0.2 m), test = rest."""
    labels = np.asarray(labels, dtype=np.int64)
    roles = np.full(labels.shape[0], -1, dtype=np.int64)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.shape[0] < 5:
            raise ValueError(f"class {int(c)} has only {members.shape[0]} nodes; need at least 5")
        rng = np.random.default_rng([seed, int(c)])
        members = members[rng.permutation(members.shape[0])]
        n_train = int(np.floor(0.6 * members.shape[0]))
        n_val = int(np.floor(0.2 * members.shape[0]))
        roles[members[:n_train]] = TRAIN
        roles[members[n_train : n_train + n_val]] = VAL
        roles[members[n_train + n_val :]] = TEST
    return Split(roles)


@dataclass(frozen=True)
class Task:
    index: int
    classes: np.ndarray
    node_ids: np.ndarray  # global ids, ascending; local id k maps to node_ids[k]
    graph: Graph


def partition_tasks(g: Graph, classes_per_task: int = 2, class_order=None) -> list[Task]:
    """Group classes into consecutive tasks and cut each task's induced subgraph.

    A trailing smaller task holds the remainder when the class count does not
    divide evenly.
    """
    if g.labels is None:
        raise ValueError("task partitioning requires labels")
    if classes_per_task < 1:
        raise ValueError("classes_per_task must be >= 1")
    num_classes = int(g.labels.max()) + 1
    order = np.asarray(class_order if class_order is not None else np.arange(num_classes), dtype=np.int64)
    if np.unique(order).shape[0] != num_classes or order.min() < 0 or order.max() >= num_classes:
        raise ValueError("class_order must be a permutation of all class ids")

    tasks = []
    for i, start in enumerate(range(0, num_classes, classes_per_task)):
        chunk = order[start : start + classes_per_task]
        member_mask = np.isin(g.labels, chunk)
        for c in chunk:
            if not (g.labels == c).any():
                raise ValueError(f"class {int(c)} has no nodes")
        node_ids = np.flatnonzero(member_mask)
        sub, _ = induced_subgraph(g, node_ids)
        tasks.append(Task(index=i, classes=chunk.copy(), node_ids=node_ids, graph=sub))
    return tasks


def task_nodes_by_role(task: Task, split: Split, role: int) -> np.ndarray:
    """Task-local ids of the task's nodes holding ``role`` in the global split."""
    return np.flatnonzero(split.roles[task.node_ids] == role)


@dataclass
class AccuracyMatrix:
    """Lower-triangular record: values[i, j] = accuracy on task j after training task i."""

    values: np.ndarray
    defined: np.ndarray

    @classmethod
    def empty(cls, k: int) -> "AccuracyMatrix":
        return cls(np.zeros((k, k)), np.zeros((k, k), dtype=bool))

    def set(self, i: int, j: int, acc: float) -> None:
        self.values[i, j] = acc
        self.defined[i, j] = True

    @property
    def num_tasks(self) -> int:
        return self.values.shape[0]


def average_accuracy(m: AccuracyMatrix) -> float:
    """Mean of the final row."""
    last = m.num_tasks - 1
    if not m.defined[last, : m.num_tasks].all():
        raise ValueError("final-row accuracies are not all defined")
    return float(m.values[last, : m.num_tasks].mean())


def average_forgetting(m: AccuracyMatrix) -> float:
    """Mean final-minus-diagonal accuracy drop over earlier tasks; 0 for a single task."""
    k = m.num_tasks
    if k == 1:
        return 0.0
    need_last = m.defined[k - 1, : k - 1].all()
    need_diag = all(m.defined[i, i] for i in range(k - 1))
    if not (need_last and need_diag):
        raise ValueError("forgetting needs the diagonal and the final row")
    drops = [m.values[k - 1, i] - m.values[i, i] for i in range(k - 1)]
    return float(np.mean(drops))


@dataclass(frozen=True)
class RunConfig:
    method: str = "ftf_er"
    sampler: str = "deterministic"
    budget_per_class: int = 10
    beta: float = 0.5
    lam: float = 1.0
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    hps_scope: str = "task"
    classes_per_task: int = 2

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.hps_scope not in HPS_SCOPES:
            raise ValueError(f"hps_scope must be one of {HPS_SCOPES}, got {self.hps_scope!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.uses_buffer and self.budget_per_class < 1:
            raise ValueError("replay methods need budget_per_class >= 1")

    @property
    def uses_buffer(self) -> bool:
        return self.method in ("ftf_er", "random_replay", "mf_replay")

    def echo(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out


@dataclass
class RunResult:
    matrix: AccuracyMatrix
    average_accuracy: float
    average_forgetting: float | None
    buffer_history: list[dict]
    visible_classes_per_row: list[int]
    timings: dict[str, float]
    config: dict


def derived_seed(master: int, *salts: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, salts)]).generate_state(1)[0])


def _task_potentials(cfg: RunConfig, bundle: DatasetBundle, tasks: list[Task]) -> list[np.ndarray]:
    solver = SolverConfig()
    if cfg.hps_scope == "global":
        full = hodge_potential_score(bundle.graph, solver).values
        return [full[t.node_ids] for t in tasks]
    return [hodge_potential_score(t.graph, solver).values for t in tasks]


def _selection_scores(cfg: RunConfig, model, task: Task, adj, train_local, mask, potentials, select_seed):
    labels_local = task.graph.labels
    if cfg.method == "ftf_er":
        loss_s = grand_scores(model, adj, task.graph.features, train_local, labels_local, mask)
        topo_s = topo_scores_from_values(potentials, train_local)
        return fuse_scores(loss_s, topo_s, FusionConfig(cfg.beta))
    if cfg.method == "random_replay":
        raw = baseline_scores("random", labels=labels_local[train_local], seed=select_seed)
    elif cfg.method == "mf_replay":
        raw = baseline_scores(
            "mean_of_feature",
            labels=labels_local[train_local],
            features=task.graph.features[train_local],
        )
    else:
        raise ValueError(f"method {cfg.method} performs no selection")
    return minmax_normalize(raw)


def topo_scores_from_values(values: np.ndarray, train_local):
    from .hodge import PotentialScores

    return topo_scores(PotentialScores(values), train_local)


def run_continual(cfg: RunConfig, bundle: DatasetBundle) -> RunResult:
    """Stream the tasks in order: train with replay, score, sample, extend the buffer.

    Row i of the accuracy matrix evaluates tasks 1..i on their test nodes with
    all classes seen so far visible. Everything derives from cfg.seed.
    """
    if cfg.method == "joint":
        raise ValueError("joint training is not a streamed run; use run_joint")
    g = bundle.graph
    if g.labels is None or g.features is None:
        raise ValueError("continual runs need a preprocessed bundle with features and labels")
    timings = {"preprocess_hps": 0.0, "train": 0.0, "score_select": 0.0, "evaluate": 0.0}

    split = split_nodes(g.labels, derived_seed(cfg.seed, 1))
    tasks = partition_tasks(g, cfg.classes_per_task)
    k = len(tasks)
    num_classes = int(g.labels.max()) + 1

    if cfg.uses_buffer:
        t0 = time.perf_counter()
        potentials = _task_potentials(cfg, bundle, tasks)
        timings["preprocess_hps"] = time.perf_counter() - t0
    else:
        potentials = [None] * k

    task_adjs = [propagation_matrix(t.graph, cfg.model.backbone) for t in tasks]
    model = init_model(cfg.model, g.features.shape[1], num_classes, seed=derived_seed(cfg.seed, 2))
    buf = empty_buffer(g.features.shape[1])
    buffer_adj = None

    matrix = AccuracyMatrix.empty(k)
    buffer_history: list[dict] = []
    visible_per_row: list[int] = []
    seen: list[int] = []

    for task in tasks:
        seen.extend(int(c) for c in task.classes)
        mask = class_mask(seen, num_classes)
        train_local = task_nodes_by_role(task, split, TRAIN)
        if train_local.shape[0] == 0:
            raise ValueError(f"task {task.index} has an empty training set")
        adj = task_adjs[task.index]

        t0 = time.perf_counter()
        state = adam_init(model)
        for step in range(1, cfg.model.epochs + 1):
            _, grads = combined_loss(
                model, adj, task.graph.features, train_local, task.graph.labels,
                buf, cfg.lam, mask, buffer_adj=buffer_adj,
            )
            adam_step(model, grads, state, cfg.model.learning_rate, step)
        timings["train"] += time.perf_counter() - t0

        if cfg.uses_buffer:
            t0 = time.perf_counter()
            select_seed = derived_seed(cfg.seed, 3, task.index)
            scores = _selection_scores(cfg, model, task, adj, train_local, mask, potentials[task.index], select_seed)
            labels_for_budget = task.graph.labels[train_local]
            if cfg.sampler == "deterministic":
                picked = select_deterministic(scores, labels_for_budget, cfg.budget_per_class)
            else:
                picked = select_probabilistic(scores, labels_for_budget, cfg.budget_per_class, select_seed)
            selected_local = train_local[picked]
            buf = update_buffer(
                buf, task.graph, selected_local, task.node_ids[selected_local], task.index
            )
            buffer_adj = propagation_matrix(buf.graph, cfg.model.backbone) if not buf.is_empty else None
            timings["score_select"] += time.perf_counter() - t0
        buffer_history.append({"task": task.index, **buffer_stats(buf)})

        t0 = time.perf_counter()
        for past in tasks[: task.index + 1]:
            test_local = task_nodes_by_role(past, split, TEST)
            acc = evaluate_accuracy(
                model, task_adjs[past.index], past.graph.features, test_local, past.graph.labels, mask
            )
            matrix.set(task.index, past.index, acc)
        visible_per_row.append(int(mask.sum()))
        timings["evaluate"] += time.perf_counter() - t0

    return RunResult(
        matrix=matrix,
        average_accuracy=average_accuracy(matrix),
        average_forgetting=average_forgetting(matrix),
        buffer_history=buffer_history,
        visible_classes_per_row=visible_per_row,
        timings=timings,
        config=cfg.echo(),
    )


def run_joint(cfg: RunConfig, bundle: DatasetBundle) -> RunResult:
    """Upper-bound reference: one training phase on all tasks' training nodes at once.

    Only the final matrix row is defined, so forgetting is not a meaningful
    quantity here and is reported as None.
    """
    g = bundle.graph
    if g.labels is None or g.features is None:
        raise ValueError("joint runs need a preprocessed bundle with features and labels")
    timings = {"preprocess_hps": 0.0, "train": 0.0, "score_select": 0.0, "evaluate": 0.0}

    split = split_nodes(g.labels, derived_seed(cfg.seed, 1))
    tasks = partition_tasks(g, cfg.classes_per_task)
    k = len(tasks)
    num_classes = int(g.labels.max()) + 1
    mask = class_mask(range(num_classes), num_classes)

    model = init_model(cfg.model, g.features.shape[1], num_classes, seed=derived_seed(cfg.seed, 2))
    adj = propagation_matrix(g, cfg.model.backbone)
    train_nodes = split.nodes_with_role(TRAIN)

    t0 = time.perf_counter()
    state = adam_init(model)
    buf = empty_buffer(g.features.shape[1])
    for step in range(1, cfg.model.epochs + 1):
        _, grads = combined_loss(model, adj, g.features, train_nodes, g.labels, buf, 0.0, mask)
        adam_step(model, grads, state, cfg.model.learning_rate, step)
    timings["train"] = time.perf_counter() - t0

    matrix = AccuracyMatrix.empty(k)
    t0 = time.perf_counter()
    task_adjs = [propagation_matrix(t.graph, cfg.model.backbone) for t in tasks]
    for task in tasks:
        test_local = task_nodes_by_role(task, split, TEST)
        acc = evaluate_accuracy(
            model, task_adjs[task.index], task.graph.features, test_local, task.graph.labels, mask
        )
        matrix.set(k - 1, task.index, acc)
    timings["evaluate"] = time.perf_counter() - t0

    buffer_history = [{"task": t.index, **buffer_stats(buf)} for t in tasks]
    return RunResult(
        matrix=matrix,
        average_accuracy=average_accuracy(matrix),
        average_forgetting=None,
        buffer_history=buffer_history,
        visible_classes_per_row=[num_classes] * k,
        timings=timings,
        config=cfg.echo(),
    )


def run(cfg: RunConfig, bundle: DatasetBundle) -> RunResult:
    """Dispatch on cfg.method."""
    return run_joint(cfg, bundle) if cfg.method == "joint" else run_continual(cfg, bundle)


def benchmark_run_config(method: str, beta: float = 0.5, seed: int = 0) -> RunConfig:
    """Run settings paired with the bundled benchmark dataset: b=10, lambda=1, 5 tasks."""
    return RunConfig(
        method=method,
        sampler="deterministic",
        budget_per_class=10,
        beta=beta,
        lam=1.0,
        model=ModelConfig(hidden_dim=64, epochs=100, learning_rate=0.005),
        seed=seed,
    )
