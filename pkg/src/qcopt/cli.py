"""Command-line front end: ``qcopt <subcommand> ...``.

Every run writes a JSON manifest next to its outputs (config, seeds, file
digests, per-stage d/n/q, wall time). Errors are reported on stderr as one
JSON object; exit codes are 0 success, 1 other failure, 2 usage or bad
input, 3 verification failure, 4 capacity or limit exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import Circuit, equivalent_up_to_phase, load_circuit, render, save_circuit, unitary_of
from .errors import (
    CapacityExceeded,
    ConnectivityError,
    NotApplicable,
    QcoptError,
    QubitCapExceeded,
    TooManyNodes,
    TuningFailed,
)
from .rules import PruneBudgetExceeded, find, prune, step, verify_local

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_VERIFY, EXIT_LIMIT = 0, 1, 2, 3, 4
DEFAULT_CAP = 10


class VerificationFailed(QcoptError):
    pass


class UsageError(QcoptError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dnq(c: Circuit) -> dict:
    from .env import quality

    return {"d": c.depth, "n": len(c.gates), "q": round(quality(c), 10)}


def _is_circuit_file(p: Path) -> bool:
    name = p.name
    return (
        name.endswith(".json")
        and not name.endswith((".log.json", ".layout.json", ".manifest.json"))
        and name != "manifest.json"
    )


def collect_inputs(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(f for f in p.iterdir() if f.is_file() and _is_circuit_file(f))
        elif p.exists():
            out.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {p}")
    return out


class Outputs:
    """Either a single output file (--out x.json, one input) or a directory."""

    def __init__(self, out: str | None, count: int, default_dir: str = "."):
        out = out or default_dir
        self.single = out.endswith(".json") and count == 1
        if self.single:
            self.file = Path(out)
            self.dir = self.file.parent
            self.manifest = self.file.with_suffix(".manifest.json")
        else:
            if out.endswith(".json"):
                raise UsageError("--out ending in .json needs exactly one input")
            self.dir = Path(out)
            self.manifest = self.dir / "manifest.json"
        self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, stem: str, suffix: str = ".json") -> Path:
        if self.single:
            return self.file if suffix == ".json" else self.file.with_suffix(suffix)
        return self.dir / f"{stem}{suffix}"


def write_manifest(path, args, started: float, inputs=(), outputs=(), stages=(), extra=None) -> None:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",) and not callable(v)}
    man = {
        "subcommand": args.command,
        "version": __version__,
        "config": cfg,
        "seed": args.seed,
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
        "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in outputs],
        "stages": list(stages),
        "wall_time_s": round(time.time() - started, 3),
    }
    if extra:
        man.update(extra)
    Path(path).write_text(json.dumps(man, indent=2, default=str) + "\n")


def pmap(fn, items, jobs: int):
    """Order-preserving map, in worker processes when jobs > 1."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def write_log(log, path) -> None:
    Path(path).write_text(json.dumps([{"rule": r, "locus": list(l)} for r, l in log]) + "\n")


def read_log(path) -> list:
    return [(e["rule"], tuple(e["locus"])) for e in json.loads(Path(path).read_text())]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# workers (top level so they pickle)


def _gen_one(task):
    from .datagen import GenConfig, random_circuit

    cfg_kw, seed = task
    return random_circuit(GenConfig(**cfg_kw, seed=seed))


def _expand_one(task):
    from .datagen import expand_traced

    c, steps, seed = task
    return expand_traced(c, steps, seed)


def _anneal_one(task):
    from .anneal import anneal

    c, cfg = task
    return anneal(c, cfg)


def _optimize_one(task):
    from .agent import load_params, optimize

    c, params, length, attempts, greedy, seed = task
    net = load_params(params)
    return optimize(net, c, length, attempts, greedy, seed)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    from .datagen import episode_seeds

    started = time.time()
    kw = dict(
        num_qubits=args.qubits,
        num_logical_gates=args.gates,
        p_cnot=args.p_cnot,
        p_general_local=args.p_general,
    )
    seeds = episode_seeds(args.seed, args.count)
    circuits = pmap(_gen_one, [(kw, s) for s in seeds], args.jobs)
    outs = Outputs(args.out, args.count, "circuits")
    paths, stages = [], []
    for k, (s, c) in enumerate(zip(seeds, circuits)):
        p = outs.path(f"circuit_{k:04d}")
        save_circuit(c, p)
        paths.append(p)
        stages.append({"file": p.name, "seed": s, "generated": _dnq(c)})
    write_manifest(outs.manifest, args, started, (), paths, stages)
    return EXIT_OK


def _load_all(args):
    files = collect_inputs(args.inputs)
    if not files:
        raise UsageError("no input circuits")
    return files, [load_circuit(f) for f in files]


def cmd_prune(args) -> int:
    started = time.time()
    files, circuits = _load_all(args)
    pruned = pmap(prune, circuits, args.jobs)
    outs = Outputs(args.out, len(files), "pruned")
    paths, stages = [], []
    for f, c, p in zip(files, circuits, pruned):
        out = outs.path(f.stem)
        save_circuit(p, out)
        paths.append(out)
        stages.append({"file": f.name, "before": _dnq(c), "after": _dnq(p)})
    write_manifest(outs.manifest, args, started, files, paths, stages)
    return EXIT_OK


def cmd_expand(args) -> int:
    from .datagen import episode_seeds

    started = time.time()
    files, circuits = _load_all(args)
    seeds = episode_seeds(args.seed, len(files))
    # expansion starts from a pruned circuit
    tasks = [(prune(c), args.steps, s) for c, s in zip(circuits, seeds)]
    results = pmap(_expand_one, tasks, args.jobs)
    outs = Outputs(args.out, len(files), "expanded")
    paths, stages = [], []
    for f, (c, _, s), res in zip(files, tasks, results):
        out = outs.path(f.stem)
        save_circuit(res.circuit, out)
        write_log(res.log, outs.path(f.stem, ".log.json"))
        paths.append(out)
        stages.append({"file": f.name, "seed": s, "pruned": _dnq(c), "expanded": _dnq(res.circuit), "stalled": res.stalled})
    write_manifest(outs.manifest, args, started, files, paths, stages)
    return EXIT_OK


def cmd_anneal(args) -> int:
    from dataclasses import replace

    from .anneal import AnnealConfig, tune_acceptance, write_trace
    from .datagen import episode_seeds

    started = time.time()
    files, circuits = _load_all(args)
    circuits = [prune(c) for c in circuits]
    cfg = AnnealConfig(steps=args.steps, t_start=args.t_start, t_end=args.t_end, seed=args.seed)
    extra = {}
    if args.tune:
        cfg = tune_acceptance(cfg, circuits[: max(10, args.tune_samples)], pilot_steps=args.pilot_steps)
        extra["tuned"] = {"t_start": cfg.t_start, "t_end": cfg.t_end}
    seeds = episode_seeds(args.seed, len(files))
    results = pmap(_anneal_one, [(c, replace(cfg, seed=s)) for c, s in zip(circuits, seeds)], args.jobs)
    outs = Outputs(args.out, len(files), "annealed")
    paths, stages = [], []
    for f, c, s, res in zip(files, circuits, seeds, results):
        out = outs.path(f.stem)
        save_circuit(res.best, out)
        write_log(res.log[: res.best_moves], outs.path(f.stem, ".log.json"))
        write_trace(res, outs.path(f.stem, ".trace.csv"))
        paths.append(out)
        stages.append(
            {"file": f.name, "seed": s, "start": _dnq(c), "best": _dnq(res.best), "acceptance": res.acceptance}
        )
    write_manifest(outs.manifest, args, started, files, paths, stages, extra)
    return EXIT_OK


def cmd_train(args) -> int:
    import torch

    from .agent import PolicyValueNet, TrainConfig, save_params, train, write_curves
    from .datagen import GenConfig

    started = time.time()
    torch.set_num_threads(max(1, args.jobs))
    gen = GenConfig(num_qubits=args.qubits, num_logical_gates=args.gates, expansion_steps=args.expansion_steps)
    cfg = TrainConfig(
        gamma=args.gamma,
        value_coef=args.value_coef,
        clip=args.clip,
        lr=args.lr,
        ppo_steps=args.ppo_steps,
        episodes_per_epoch=args.episodes,
        epochs=args.epochs,
        episode_length=args.episode_length,
        seed=args.seed,
    )
    torch.manual_seed(args.seed)
    net = PolicyValueNet(hidden=args.hidden, layers=args.layers)
    res = train(net, gen, cfg)
    out = Path(args.out or "run")
    out.mkdir(parents=True, exist_ok=True)
    save_params(net, out / "params.bin")
    write_curves(res.curves, out / "curves.csv")
    stages = [{"epoch": r["epoch"], "mean_d": r["mean_d"], "mean_n": r["mean_n"], "mean_q": r["mean_q"]} for r in res.curves[-1:]]
    write_manifest(out / "manifest.json", args, started, (), [out / "params.bin", out / "curves.csv"], stages)
    return EXIT_OK


def cmd_optimize(args) -> int:
    from .datagen import episode_seeds

    started = time.time()
    files, circuits = _load_all(args)
    seeds = episode_seeds(args.seed, len(files))
    tasks = [(c, args.params, args.episode_length, args.attempts, args.greedy, s) for c, s in zip(circuits, seeds)]
    results = pmap(_optimize_one, tasks, args.jobs)
    outs = Outputs(args.out, len(files), "optimized")
    paths, stages = [], []
    for f, c, s, res in zip(files, circuits, seeds, results):
        out = outs.path(f.stem)
        save_circuit(res.best, out)
        write_log(res.log, outs.path(f.stem, ".log.json"))
        paths.append(out)
        stages.append({"file": f.name, "seed": s, "input": _dnq(c), "pruned": _dnq(res.start), "best": _dnq(res.best)})
    write_manifest(outs.manifest, args, started, [*files, Path(args.params)], paths, stages)
    return EXIT_OK


def replay(circuit: Circuit, log, cap: int = DEFAULT_CAP) -> dict:
    """Replay a (rule, locus) log from prune(circuit), checking every step locally."""
    cur = start = prune(circuit)
    violations = []
    for k, (rule, locus) in enumerate(log):
        try:
            t = find(cur, rule, locus)
        except NotApplicable as e:
            violations.append({"step": k, "rule": rule, "locus": list(locus), "error": str(e)})
            break
        if not verify_local(cur, t):
            violations.append({"step": k, "rule": rule, "locus": list(locus), "error": "local unitary mismatch"})
        cur = step(cur, t)
    report = {"steps": len(log), "violations": violations, "final": _dnq(cur), "full_check": None}
    if cur.num_qubits <= cap:
        ok = equivalent_up_to_phase(unitary_of(start, cap), unitary_of(cur, cap), 1e-8)
        report["full_check"] = bool(ok)
        if not ok:
            violations.append({"step": None, "error": "full unitary mismatch"})
    report["final_circuit"] = cur
    return report


def cmd_verify(args) -> int:
    started = time.time()
    c = load_circuit(args.circuit)
    log = read_log(args.log)
    rep = replay(c, log, args.cap)
    final = rep.pop("final_circuit")
    if args.expect:
        same = load_circuit(args.expect) == final
        rep["matches_expected"] = same
        if not same:
            rep["violations"].append({"step": None, "error": "final circuit differs from --expect"})
    print(json.dumps(rep))
    if args.out:
        write_manifest(args.out, args, started, [Path(args.circuit), Path(args.log)], (), [rep])
    if rep["violations"]:
        raise VerificationFailed(f"{len(rep['violations'])} violation(s)")
    return EXIT_OK


def cmd_compile_qaoa(args) -> int:
    from .qaoa import Graph, QaoaParams, compile_maxcut

    started = time.time()
    graph = Graph.parse(Path(args.graph).read_text(), args.nodes)
    params = QaoaParams(_floats(args.gammas), _floats(args.betas), allow_special=args.allow_special)
    res = compile_maxcut(graph, params, args.qubits)
    outs = Outputs(args.out if args.out else "qaoa.json", 1)
    out = outs.path(Path(args.graph).stem)
    save_circuit(res.circuit, out)
    layout_path = outs.path(Path(args.graph).stem, ".layout.json")
    layout_path.write_text(json.dumps({"layout": list(res.layout)}) + "\n")
    write_manifest(
        outs.manifest, args, started, [Path(args.graph)], [out, layout_path],
        [{"compiled": _dnq(res.circuit), "raw_gates": res.raw_gate_count}], {"layout": list(res.layout)},
    )
    return EXIT_OK


def cmd_stats(args) -> int:
    files, circuits = _load_all(args)
    rows = np.array([[c.depth, len(c.gates), _dnq(c)["q"]] for c in circuits], dtype=float)
    k = len(rows)
    se = rows.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.zeros(3)
    rep = {"count": k}
    for i, name in enumerate("dnq"):
        rep[name] = {"mean": float(rows[:, i].mean()), "stderr": float(se[i])}
    print(json.dumps(rep))
    return EXIT_OK


def cmd_render(args) -> int:
    files, circuits = _load_all(args)
    for f, c in zip(files, circuits):
        s = _dnq(c)
        print(f"# {f.name}  d={s['d']} n={s['n']} q={s['q']:g}")
        print(render(c))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None)
    common.add_argument("--jobs", type=int, default=int(os.environ.get("QCOPT_JOBS", "1")))

    ap = argparse.ArgumentParser(prog="qcopt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("generate", cmd_generate, "random nearest-neighbour circuits")
    p.add_argument("--qubits", type=int, default=12)
    p.add_argument("--gates", type=int, default=150)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--p-cnot", type=float, default=0.8)
    p.add_argument("--p-general", type=float, default=0.3)

    p = add("prune", cmd_prune, "apply hard rules to a fixpoint")
    p.add_argument("inputs", nargs="+")

    p = add("expand", cmd_expand, "random soft transformations (each followed by pruning)")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--steps", type=int, default=500)

    p = add("anneal", cmd_anneal, "simulated annealing")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--t-start", type=float, default=0.3)
    p.add_argument("--t-end", type=float, default=0.003)
    p.add_argument("--tune", action="store_true", help="rescale temperatures to 10-25%% acceptance")
    p.add_argument("--tune-samples", type=int, default=10)
    p.add_argument("--pilot-steps", type=int, default=None)

    p = add("train", cmd_train, "PPO training on generated circuits")
    p.add_argument("--qubits", type=int, default=4)
    p.add_argument("--gates", type=int, default=20)
    p.add_argument("--expansion-steps", type=int, default=30)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--episodes", type=int, default=32)
    p.add_argument("--episode-length", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--ppo-steps", type=int, default=16)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--value-coef", type=float, default=0.5)
    p.add_argument("--clip", type=float, default=0.2)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--layers", type=int, default=4)

    p = add("optimize", cmd_optimize, "optimise circuits with a trained net")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--params", required=True)
    p.add_argument("--episode-length", type=int, default=250)
    p.add_argument("--attempts", type=int, default=1)
    p.add_argument("--greedy", action="store_true")

    p = add("verify", cmd_verify, "replay a transformation log with local and full checks")
    p.add_argument("circuit")
    p.add_argument("--log", required=True)
    p.add_argument("--expect", default=None, help="circuit the log should end in")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)

    p = add("compile-qaoa", cmd_compile_qaoa, "MaxCut QAOA circuit for an edge-list graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--gammas", required=True, help="comma separated, one per cycle")
    p.add_argument("--betas", required=True)
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--qubits", type=int, default=None)
    p.add_argument("--allow-special", action="store_true")

    p = add("stats", cmd_stats, "mean and standard error of d, n, q")
    p.add_argument("inputs", nargs="+")

    p = add("render", cmd_render, "text diagram")
    p.add_argument("inputs", nargs="+")
    return ap


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, VerificationFailed):
        return EXIT_VERIFY
    if isinstance(exc, (CapacityExceeded, QubitCapExceeded, TooManyNodes, PruneBudgetExceeded, TuningFailed)):
        return EXIT_LIMIT
    if isinstance(exc, (UsageError, ConnectivityError, FileNotFoundError, json.JSONDecodeError, KeyError, ValueError)):
        return EXIT_USAGE
    return EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # reported as JSON, mapped to an exit code
        code = exit_code_for(exc)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
