"""Synthetic benchmark generation, dataset files, and the cleanup pipeline."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph, largest_connected_component, read_edge_list, undirected_support


@dataclass(frozen=True)
class SbmConfig:
    """Stochastic block model with Gaussian class-prototype features."""

    num_classes: int = 4
    nodes_per_class: int = 30
    p_in: float = 0.2
    p_out: float = 0.02
    feature_dim: int = 8
    class_center_scale: float = 1.0
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1 or self.nodes_per_class < 1 or self.feature_dim < 1:
            raise ValueError("num_classes, nodes_per_class, feature_dim must be >= 1")
        if not (0.0 <= self.p_out < self.p_in <= 1.0):
            raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def num_nodes(self) -> int:
        return self.num_classes * self.nodes_per_class


@dataclass
class DatasetBundle:
    graph: Graph
    name: str
    provenance: str  # "generated" | "loaded"
    preprocessing: dict | None = None


def generate_sbm(cfg: SbmConfig) -> DatasetBundle:
    """Seeded SBM: block-wise edge probabilities, features around class centers.

    The RNG consumes, in order: class centers, per-node noise, the pairwise
    edge coin flips. Same config, same bundle, bitwise.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.num_nodes
    labels = np.repeat(np.arange(cfg.num_classes, dtype=np.int64), cfg.nodes_per_class)
    centers = rng.standard_normal((cfg.num_classes, cfg.feature_dim)) * cfg.class_center_scale
    features = centers[labels] + rng.standard_normal((n, cfg.feature_dim)) * cfg.noise_sigma

    coins = rng.random((n, n))
    prob = np.where(labels[:, None] == labels[None, :], cfg.p_in, cfg.p_out)
    ui, uj = np.triu_indices(n, k=1)
    keep = coins[ui, uj] < prob[ui, uj]
    edges = np.stack([ui[keep], uj[keep]], axis=1)
    graph = build_graph(edges, n, directed=False, features=features, labels=labels)
    return DatasetBundle(graph, name=f"sbm{cfg.num_classes}x{cfg.nodes_per_class}", provenance="generated")


def _parse_labels(path: Path) -> np.ndarray:
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected an integer label, got {raw!r}") from None
    return np.asarray(labels, dtype=np.int64)


def _parse_features(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric feature value in {raw!r}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no feature rows")
    return np.asarray(rows, dtype=np.float64)


def load_dataset(edge_file, feature_csv, label_csv) -> DatasetBundle:
    """Read raw dataset files; no preprocessing is applied here."""
    for p in (edge_file, feature_csv, label_csv):
        if not Path(p).exists():
            raise FileNotFoundError(f"missing dataset file: {p}")
    labels = _parse_labels(Path(label_csv))
    features = _parse_features(Path(feature_csv))
    if features.shape[0] != labels.shape[0]:
        raise ValueError(
            f"feature rows ({features.shape[0]}) and label rows ({labels.shape[0]}) disagree"
        )
    edges, n = read_edge_list(edge_file, num_nodes=labels.shape[0])
    graph = build_graph(edges, n, directed=False, features=features, labels=labels)
    return DatasetBundle(graph, name=Path(edge_file).stem, provenance="loaded")


def preprocess(bundle: DatasetBundle) -> DatasetBundle:
    """Symmetrize, keep the largest connected component, compact label ids.

    Self-loop and duplicate removal already happen at construction; this stage
    records what the component filter and label compaction changed.
    """
    g = undirected_support(bundle.graph)
    if g.labels is None:
        raise ValueError("preprocessing requires labels")
    lcc, _ = largest_connected_component(g)

    old_classes = np.unique(lcc.labels)
    lut = np.full(int(old_classes.max()) + 1, -1, dtype=np.int64)
    lut[old_classes] = np.arange(old_classes.shape[0])
    compacted = build_graph(
        lcc.edge_pairs(),
        lcc.num_nodes,
        directed=False,
        features=lcc.features,
        labels=lut[lcc.labels],
    )
    record = {
        "input_nodes": bundle.graph.num_nodes,
        "kept_nodes": compacted.num_nodes,
        "dropped_nodes": bundle.graph.num_nodes - compacted.num_nodes,
        "input_edges": bundle.graph.num_edges,
        "kept_edges": compacted.num_edges,
        "classes_removed": int(np.unique(bundle.graph.labels).shape[0] - old_classes.shape[0]),
        "label_map": {int(old): int(lut[old]) for old in old_classes},
    }
    return DatasetBundle(compacted, bundle.name, bundle.provenance, preprocessing=record)


def write_dataset(bundle: DatasetBundle, out_dir, manifest_extra: dict | None = None) -> dict:
    """Write edges.tsv / features.csv / labels.csv / manifest.json into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = bundle.graph
    if g.features is None or g.labels is None:
        raise ValueError("dataset files require features and labels")

    with open(out / "edges.tsv", "w", encoding="utf-8") as fh:
        for u, v in g.edge_pairs():
            if u < v or g.directed:
                fh.write(f"{u}\t{v}\n")
    with open(out / "features.csv", "w", encoding="utf-8") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(out / "labels.csv", "w", encoding="utf-8") as fh:
        for y in g.labels:
            fh.write(f"{y}\n")

    manifest = {
        "name": bundle.name,
        "provenance": bundle.provenance,
        "num_nodes": g.num_nodes,
        "num_edges": g.num_edges,
        "num_classes": int(g.labels.max()) + 1 if g.num_nodes else 0,
        "feature_dim": int(g.features.shape[1]),
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def benchmark_sbm_config() -> SbmConfig:
    """The bundled desk-scale continual-learning benchmark: 10 classes x 150 nodes."""
    return SbmConfig(
        num_classes=10,
        nodes_per_class=150,
        p_in=0.05,
        p_out=0.005,
        feature_dim=16,
        class_center_scale=1.0,
        noise_sigma=1.0,
        seed=20240601,
    )


def sbm_config_from_dict(d: dict) -> SbmConfig:
    allowed = set(SbmConfig.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown SBM config keys: {sorted(unknown)}")
    return SbmConfig(**d)
