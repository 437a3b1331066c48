"""Command-line surface: dataset generation, potential scores, flow decomposition,
continual-learning runs with declarative sweeps, and result-consistency reports.

All behavior is driven by JSON config files; flags only carry paths, --force,
and worker count. Exit codes: 0 ok, 1 usage/config, 2 solver failure,
3 report/summary mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .data import DatasetBundle, generate_sbm, load_dataset, preprocess, sbm_config_from_dict, write_dataset
from .gnn import ModelConfig
from .graph import build_graph, read_edge_list
from .harness import AccuracyMatrix, RunConfig, RunResult, average_accuracy, average_forgetting, run
from .hodge import (
    EdgeFlow,
    SolverConfig,
    SolverConvergenceError,
    canonical_edges,
    curl,
    decompose_edge_flow,
    flow_divergence,
    flow_inner,
    flow_norm,
    hodge_potential_score,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_MISMATCH = 3


class ConfigError(ValueError):
    pass


def _check_keys(d: dict, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    missing = sorted(required - set(d))
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None


_DATASET_FILE_KEYS = {"kind", "edges", "features", "labels"}
_RUN_KEYS = {"method", "sampler", "budget_per_class", "beta", "lambda", "hps_scope", "classes_per_task", "seed"}
_MODEL_KEYS = {"hidden_dim", "learning_rate", "epochs", "backbone"}
_SWEEP_KEYS = {"betas", "seeds"}


def _dataset_from_config(block: dict) -> DatasetBundle:
    if not isinstance(block, dict) or "kind" not in block:
        raise ConfigError("dataset: missing 'kind' (sbm or files)")
    kind = block["kind"]
    if kind == "sbm":
        params = {k: v for k, v in block.items() if k != "kind"}
        return generate_sbm(sbm_config_from_dict(params))
    if kind == "files":
        _check_keys(block, _DATASET_FILE_KEYS, _DATASET_FILE_KEYS, "dataset")
        return load_dataset(block["edges"], block["features"], block["labels"])
    raise ConfigError(f"dataset: unknown kind {kind!r}")


def _model_from_config(block: dict | None) -> ModelConfig:
    if block is None:
        return ModelConfig()
    _check_keys(block, _MODEL_KEYS, set(), "model")
    return ModelConfig(**block)


def _run_config(run_block: dict, model: ModelConfig, beta: float, seed: int) -> RunConfig:
    kwargs = dict(run_block)
    kwargs["lam"] = kwargs.pop("lambda", 1.0)
    kwargs.pop("beta", None)
    kwargs.pop("seed", None)
    return RunConfig(model=model, beta=beta, seed=seed, **kwargs)


def _refuse_overwrite(paths, force: bool) -> None:
    if force:
        return
    for p in paths:
        if Path(p).exists():
            raise ConfigError(f"refusing to overwrite existing output {p} (use --force)")


def cmd_gen(args) -> int:
    cfg = _load_json(args.config)
    _check_keys(cfg, {"dataset", "output_dir"}, {"dataset", "output_dir"}, "config")
    block = cfg["dataset"]
    if not isinstance(block, dict) or block.get("kind") != "sbm":
        raise ConfigError("gen requires a dataset block with kind 'sbm'")
    sbm = sbm_config_from_dict({k: v for k, v in block.items() if k != "kind"})
    out = Path(cfg["output_dir"])
    _refuse_overwrite([out / name for name in ("edges.tsv", "features.csv", "labels.csv", "manifest.json")], args.force)
    bundle = generate_sbm(sbm)
    write_dataset(bundle, out, manifest_extra={"sbm": asdict(sbm)})
    print(f"wrote dataset '{bundle.name}' to {out}")
    return EXIT_OK


def _load_edge_graph(path, directed: bool):
    edges, n = read_edge_list(path)
    return build_graph(edges, n, directed=directed)


def _solver_config(args) -> SolverConfig | None:
    kwargs = {}
    if getattr(args, "tolerance", None) is not None:
        kwargs["tolerance"] = args.tolerance
    if getattr(args, "max_iterations", None) is not None:
        kwargs["max_iterations"] = args.max_iterations
    return SolverConfig(**kwargs) if kwargs else None


def cmd_hps(args) -> int:
    g = _load_edge_graph(args.edge_file, directed=not args.undirected)
    _refuse_overwrite([args.out_csv], args.force)
    scores = hodge_potential_score(g, _solver_config(args))
    with open(args.out_csv, "w", encoding="utf-8") as fh:
        fh.write("node_id,score\n")
        for i, v in enumerate(scores.values):
            fh.write(f"{i},{float(v)!r}\n")
    print(f"wrote {g.num_nodes} scores to {args.out_csv}")
    return EXIT_OK


def _read_flow_file(path, g) -> EdgeFlow:
    edges = canonical_edges(g)
    keys = {(int(u), int(v)): k for k, (u, v) in enumerate(edges)}
    values = np.zeros(edges.shape[0])
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ConfigError(f"{path}:{lineno}: expected 'u<TAB>v<TAB>value'")
            try:
                u, v, val = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: malformed flow entry {raw!r}") from None
            a, b, sgn = (u, v, 1.0) if u < v else (v, u, -1.0)
            if (a, b) not in keys:
                raise ConfigError(f"{path}:{lineno}: flow on nonexistent edge ({u}, {v})")
            if (a, b) in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate flow entry for edge ({a}, {b})")
            seen.add((a, b))
            values[keys[(a, b)]] = sgn * val
    return EdgeFlow(values)


def _write_flow_csv(path, g, flow: EdgeFlow) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("u,v,value\n")
        for (u, v), val in zip(canonical_edges(g), flow.values):
            fh.write(f"{u},{v},{float(val)!r}\n")


def cmd_decompose(args) -> int:
    g = _load_edge_graph(args.edge_file, directed=False)
    flow = _read_flow_file(args.flow_file, g)
    out = Path(args.out_dir)
    targets = [out / n for n in ("gradient.csv", "curl.csv", "harmonic.csv", "orthogonality.json")]
    _refuse_overwrite(targets, args.force)
    out.mkdir(parents=True, exist_ok=True)

    dec = decompose_edge_flow(g, flow, _solver_config(args))
    parts = {"gradient": dec.gradient_part, "curl": dec.curl_part, "harmonic": dec.harmonic_part}
    for name, part in parts.items():
        _write_flow_csv(out / f"{name}.csv", g, part)

    recon = dec.gradient_part.values + dec.curl_part.values + dec.harmonic_part.values
    report = {
        "norms": {name: flow_norm(part) for name, part in parts.items()},
        "inner_products": {
            "gradient_curl": flow_inner(dec.gradient_part, dec.curl_part),
            "gradient_harmonic": flow_inner(dec.gradient_part, dec.harmonic_part),
            "curl_harmonic": flow_inner(dec.curl_part, dec.harmonic_part),
        },
        "reconstruction_max_error": float(np.max(np.abs(recon - flow.values), initial=0.0)),
        "max_abs_divergence": {
            "curl": float(np.max(np.abs(flow_divergence(g, dec.curl_part)), initial=0.0)),
            "harmonic": float(np.max(np.abs(flow_divergence(g, dec.harmonic_part)), initial=0.0)),
        },
        "max_abs_curl": {
            "gradient": float(np.max(np.abs(curl(g, dec.gradient_part)), initial=0.0)),
            "harmonic": float(np.max(np.abs(curl(g, dec.harmonic_part)), initial=0.0)),
        },
    }
    with open(out / "orthogonality.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote decomposition to {out}")
    return EXIT_OK


def _matrix_to_csv(matrix: AccuracyMatrix) -> str:
    lines = []
    k = matrix.num_tasks
    for i in range(k):
        cells = [repr(float(matrix.values[i, j])) if matrix.defined[i, j] else "" for j in range(k)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _matrix_from_csv(text: str) -> AccuracyMatrix:
    rows = [line.split(",") for line in text.strip("\n").split("\n")]
    k = len(rows)
    m = AccuracyMatrix.empty(k)
    for i, row in enumerate(rows):
        if len(row) != k:
            raise ConfigError(f"matrix.csv row {i} has {len(row)} cells, expected {k}")
        for j, cell in enumerate(row):
            if cell != "":
                m.set(i, j, float(cell))
    return m


def _write_run_outputs(result: RunResult, cell_dir: Path) -> None:
    cell_dir.mkdir(parents=True, exist_ok=True)
    (cell_dir / "matrix.csv").write_text(_matrix_to_csv(result.matrix), encoding="utf-8")
    summary = {
        "average_accuracy": result.average_accuracy,
        "average_forgetting": result.average_forgetting,
        "buffer_history": result.buffer_history,
        "visible_classes_per_row": result.visible_classes_per_row,
        "config": result.config,
    }
    with open(cell_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(cell_dir / "timings.json", "w", encoding="utf-8") as fh:
        json.dump(result.timings, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cell_dir(out: Path, beta: float, seed: int) -> Path:
    return out / f"beta_{beta!r}-seed_{seed}"


def _execute_cell(run_block, model_block, beta, seed, bundle, out_dir) -> tuple[float, int, float, float | None]:
    cfg = _run_config(run_block, _model_from_config(model_block), beta, seed)
    result = run(cfg, bundle)
    _write_run_outputs(result, _cell_dir(Path(out_dir), beta, seed))
    return beta, seed, result.average_accuracy, result.average_forgetting


def cmd_run(args) -> int:
    cfg = _load_json(args.config)
    _check_keys(cfg, {"dataset", "run", "model", "sweep", "output_dir"}, {"dataset", "run", "output_dir"}, "config")
    run_block = cfg["run"]
    _check_keys(run_block, _RUN_KEYS, {"method"}, "run")
    model_block = cfg.get("model")
    if model_block is not None:
        _check_keys(model_block, _MODEL_KEYS, set(), "model")
    sweep = cfg.get("sweep") or {}
    _check_keys(sweep, _SWEEP_KEYS, set(), "sweep")
    betas = sweep.get("betas", [run_block.get("beta", 0.5)])
    seeds = sweep.get("seeds", [run_block.get("seed", 0)])
    if not betas or not seeds:
        raise ConfigError("sweep axes must be nonempty")

    out = Path(cfg["output_dir"])
    cells = [(float(b), int(s)) for b in betas for s in seeds]
    _refuse_overwrite([out / "sweep.csv"] + [_cell_dir(out, b, s) for b, s in cells], args.force)

    # Validate the run/model config once up front so bad configs fail before any work.
    _run_config(run_block, _model_from_config(model_block), cells[0][0], cells[0][1])

    bundle = preprocess(_dataset_from_config(cfg["dataset"]))

    results: list[tuple[float, int, float, float | None]] = []
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [
                pool.submit(_execute_cell, run_block, model_block, b, s, bundle, str(out)) for b, s in cells
            ]
            results = [f.result() for f in futures]
    else:
        results = [_execute_cell(run_block, model_block, b, s, bundle, str(out)) for b, s in cells]

    out.mkdir(parents=True, exist_ok=True)
    lines = ["beta,num_seeds,aa_mean,aa_std,af_mean,af_std"]
    for b in sorted({c[0] for c in cells}):
        aa = np.array([r[2] for r in results if r[0] == b])
        afs = [r[3] for r in results if r[0] == b]
        have_af = all(a is not None for a in afs)
        af = np.array(afs, dtype=np.float64) if have_af else None
        lines.append(
            ",".join(
                [
                    repr(float(b)),
                    str(aa.shape[0]),
                    repr(float(aa.mean())),
                    repr(float(aa.std())),
                    repr(float(af.mean())) if af is not None else "",
                    repr(float(af.std())) if af is not None else "",
                ]
            )
        )
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for b, s, aa_val, af_val in results:
        af_text = "n/a" if af_val is None else f"{af_val:.4f}"
        print(f"beta={b} seed={s}: AA={aa_val:.4f} AF={af_text}")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    matrix_path = run_dir / "matrix.csv"
    summary_path = run_dir / "summary.json"
    if not matrix_path.exists() or not summary_path.exists():
        raise ConfigError(f"{run_dir} does not contain matrix.csv and summary.json")
    matrix = _matrix_from_csv(matrix_path.read_text(encoding="utf-8"))
    with open(summary_path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)

    aa = average_accuracy(matrix)
    try:
        af = average_forgetting(matrix)
    except ValueError:
        af = None

    stored_aa = summary.get("average_accuracy")
    stored_af = summary.get("average_forgetting")
    aa_ok = stored_aa is not None and abs(aa - stored_aa) <= 1e-9
    af_ok = (af is None and stored_af is None) or (
        af is not None and stored_af is not None and abs(af - stored_af) <= 1e-9
    )

    print(f"tasks: {matrix.num_tasks}")
    print(f"average accuracy:   {aa:.6f} (stored {stored_aa})")
    af_text = "0.000000 (single task)" if matrix.num_tasks == 1 else ("n/a" if af is None else f"{af:.6f}")
    print(f"average forgetting: {af_text} (stored {stored_af})")
    for entry in summary.get("buffer_history", []):
        print(f"  task {entry['task']}: buffer nodes={entry['nodes']} edges={entry['edges']} bytes={entry['bytes']}")
    timings_path = run_dir / "timings.json"
    if timings_path.exists():
        with open(timings_path, "r", encoding="utf-8") as fh:
            for phase, secs in sorted(json.load(fh).items()):
                print(f"  {phase}: {secs:.3f}s")

    if not (aa_ok and af_ok):
        print("MISMATCH between recomputed metrics and summary.json", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphcl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a synthetic dataset from a JSON config")
    p_gen.add_argument("config")
    p_gen.add_argument("--force", action="store_true")
    p_gen.set_defaults(func=cmd_gen)

    p_hps = sub.add_parser("hps", help="write per-node potential scores for an edge list")
    p_hps.add_argument("edge_file")
    p_hps.add_argument("out_csv")
    p_hps.add_argument("--undirected", action="store_true", help="treat edge pairs as undirected edges")
    p_hps.add_argument("--tolerance", type=float, help="solver relative-residual target")
    p_hps.add_argument("--max-iterations", type=int, dest="max_iterations")
    p_hps.add_argument("--force", action="store_true")
    p_hps.set_defaults(func=cmd_hps)

    p_dec = sub.add_parser("decompose", help="decompose an edge flow into gradient/curl/harmonic parts")
    p_dec.add_argument("edge_file")
    p_dec.add_argument("flow_file")
    p_dec.add_argument("out_dir")
    p_dec.add_argument("--tolerance", type=float, help="solver relative-residual target")
    p_dec.add_argument("--max-iterations", type=int, dest="max_iterations")
    p_dec.add_argument("--force", action="store_true")
    p_dec.set_defaults(func=cmd_decompose)

    p_run = sub.add_parser("run", help="execute continual-learning runs (optionally a beta/seed sweep)")
    p_run.add_argument("config")
    p_run.add_argument("--force", action="store_true")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", help="recompute metrics from a run directory and cross-check")
    p_rep.add_argument("run_dir")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SolverConvergenceError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, FileNotFoundError, TypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
