"""Command-line interface: ``bivgs <command> --config run.yaml ...``.

Exit codes: 0 success, 1 usage/config error, 2 runtime or numeric failure.
"""
from __future__ import annotations

import argparse
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datagen
from .config import RunConfig, load_config, parse_config
from .encoders import Checkpoint, encode_caption, load_checkpoint, save_checkpoint
from .errors import BivgsError, ConfigError, FormatError
from .evalkit import DIRECTIONS, KS, RetrievalReport, evaluate, format_table
from .simqueue import PairedQueue
from .trainer import TrainRun, TrainVariant, pretrain_hrl, train

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(ConfigError):
    pass


def _out(cfg: RunConfig, args) -> Path:
    return Path(args.out) if getattr(args, "out", None) else Path(cfg.out_dir)


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config({})
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "variant", None):
        cfg.variants = [TrainVariant.parse(v) for v in args.variant]
    return cfg


def _dataset_dir(out: Path, seed: int) -> Path:
    return out / "data" / f"seed{seed}"


def _dataset(cfg: RunConfig, out: Path, seed: int, path=None) -> datagen.SyntheticDataset:
    """Load ``path`` (or the cached per-seed dataset), generating it if absent."""
    if path is not None:
        return datagen.load(path)
    d = _dataset_dir(out, seed)
    if (d / "manifest.json").exists():
        return datagen.load(d)
    ds = datagen.generate(cfg.generation, seed, cfg.frontend)
    datagen.save(ds, d)
    return ds


def _write_run(run: TrainRun, directory: Path, stem: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    save_checkpoint(run.checkpoint, directory / f"{stem}.ckpt")
    (directory / f"{stem}_log.csv").write_text(run.log_csv())


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    cfg = _config(args)
    for seed in cfg.seeds:
        target = _dataset_dir(_out(cfg, args), seed)
        datagen.save(datagen.generate(cfg.generation, seed, cfg.frontend), target)
        print(target)
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    out = _out(cfg, args)
    for seed in cfg.seeds:
        ds = _dataset(cfg, out, seed, args.dataset)
        run = pretrain_hrl(ds, cfg.train_config(seed, progress=True))
        _write_run(run, out / f"seed{seed}", "pretrain")
        print(out / f"seed{seed}" / "pretrain.ckpt")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out(cfg, args)
    for seed in cfg.seeds:
        ds = _dataset(cfg, out, seed, args.dataset)
        tcfg = cfg.train_config(seed, progress=True)
        for variant in cfg.variants:
            init = None
            if variant.needs_pretrained:
                if args.init:
                    init = load_checkpoint(args.init)
                else:
                    pre = out / f"seed{seed}" / "pretrain.ckpt"
                    if pre.exists():
                        init = load_checkpoint(pre)
                    else:
                        run = pretrain_hrl(ds, tcfg)
                        _write_run(run, out / f"seed{seed}", "pretrain")
                        init = run.checkpoint
            run = train(ds, tcfg, variant, init)
            _write_run(run, out / f"seed{seed}" / variant.value, "model")
            print(out / f"seed{seed}" / variant.value / "model.ckpt")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    ds = datagen.load(args.dataset)
    report = evaluate(ck, ds.splits["validation"])
    print(format_table([report]))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_csv())
    return EXIT_OK


@dataclass
class Cell:
    variant: TrainVariant
    seed: int
    report: RetrievalReport | None = None
    log: list = field(default_factory=list)
    error: str | None = None


def _run_cell(cell: Cell, ds, cfg: RunConfig, pre: Checkpoint | None, out: Path) -> Cell:
    try:
        if cell.variant.needs_pretrained and pre is None:
            raise BivgsError("pretraining failed for this seed")
        run = train(ds, cfg.train_config(cell.seed), cell.variant,
                    pre if cell.variant.needs_pretrained else None)
        cell_dir = out / f"seed{cell.seed}" / cell.variant.value
        _write_run(run, cell_dir, "model")
        cell.report = evaluate(run.checkpoint, ds.splits["validation"], seed=cell.seed)
        (cell_dir / "report.csv").write_text(cell.report.to_csv())
        cell.log = run.log
    except Exception as exc:  # a failed cell must not stop the matrix
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def summarize(cells: list[Cell]) -> str:
    ok = [c.report for c in cells if c.report is not None]
    lines = ["Retrieval recall per (variant, seed)", format_table(ok), ""]
    means = []
    for variant in dict.fromkeys(c.variant for c in cells):
        reps = [c.report for c in cells if c.variant is variant and c.report is not None]
        if not reps:
            continue
        mean = RetrievalReport(n_validation=reps[0].n_validation, variant=variant.value, seed=-1)
        for d in DIRECTIONS:
            if all(d in r.recalls for r in reps):
                mean.recalls[d] = {k: float(np.mean([r.recalls[d][k] for r in reps]))
                                   for k in reps[0].recalls[d]}
        means.append(mean)
    if means:
        lines += ["Mean over seeds (seed -1 = mean row)", format_table(means), ""]
    failed = [c for c in cells if c.error]
    lines.append(f"cells: {len(cells)} run, {len(cells) - len(failed)} ok, {len(failed)} failed")
    lines += [f"FAILED {c.variant.value} seed {c.seed}: {c.error}" for c in failed]
    return "\n".join(lines) + "\n"


def run_matrix(cfg: RunConfig, out: Path, progress: bool = True) -> list[Cell]:
    out.mkdir(parents=True, exist_ok=True)
    cells: list[Cell] = []
    for seed in cfg.seeds:
        ds = _dataset(cfg, out, seed)
        pre = None
        seed_cells = [Cell(v, seed) for v in cfg.variants]
        if any(v.needs_pretrained for v in cfg.variants):
            try:
                run = pretrain_hrl(ds, cfg.train_config(seed))
                _write_run(run, out / f"seed{seed}", "pretrain")
                pre = run.checkpoint
            except Exception as exc:
                for c in seed_cells:
                    if c.variant.needs_pretrained:
                        c.error = f"pretraining: {type(exc).__name__}: {exc}"
        todo = [c for c in seed_cells if c.error is None]
        if cfg.workers > 1:
            with ThreadPoolExecutor(cfg.workers) as pool:
                list(pool.map(lambda c: _run_cell(c, ds, cfg, pre, out), todo))
        else:
            for c in todo:
                _run_cell(c, ds, cfg, pre, out)
        if progress:
            for c in seed_cells:
                status = "ok" if c.error is None else "FAILED"
                r1 = c.report.get("LRL->I", 1) if c.report else float("nan")
                print(f"seed {seed} {c.variant.value}: {status} LRL->I R@1 {r1:.3f}", file=sys.stderr)
        cells += seed_cells
    rows = [RetrievalReport.CSV_HEADER] + [row for c in cells if c.report for row in c.report.csv_rows()]
    (out / "results.csv").write_text("\n".join(rows) + "\n")
    summary = summarize(cells)
    (out / "summary.txt").write_text(summary)
    if cfg.figures:
        from . import plotting

        fig_dir = out / "figures"
        reports = [c.report for c in cells if c.report]
        if reports:
            plotting.recall_bars(reports, fig_dir / "recall_lrl_image.png", "LRL->I")
            if any("HRL->I" in r.recalls for r in reports):
                plotting.recall_bars(reports, fig_dir / "recall_hrl_image.png", "HRL->I")
        for seed in cfg.seeds:
            logs = {c.variant.value: c.log for c in cells if c.seed == seed and c.log}
            if logs:
                plotting.loss_curves(logs, fig_dir / f"loss_seed{seed}.png", f"training loss, seed {seed}")
    return cells


def cmd_run_matrix(args) -> int:
    cfg = _config(args)
    out = _out(cfg, args)
    cells = run_matrix(cfg, out)
    print(summarize(cells), end="")
    return EXIT_OK if all(c.error is None for c in cells) else EXIT_RUNTIME


def inspect_nn(ck: Checkpoint, ds: datagen.SyntheticDataset, sample_ids=None) -> tuple[list[dict], float]:
    """Nearest HRL neighbour of each query among the bilingual training pairs.

    Returns one record per query plus the fraction whose match shares the
    query's concept.
    """
    if "hrl" not in ck.encoders or "lrl" not in ck.encoders:
        raise UsageError("inspect-nn needs a checkpoint with both HRL and LRL encoders")
    train_split = ds.splits["train_bilingual"]
    capacity = int(ck.config.get("queue_capacity", 1024))
    queue = PairedQueue(max(capacity, len(train_split)))
    queue.enqueue(encode_caption(train_split.cap1, ck.encoders["hrl"]).rows,
                  encode_caption(train_split.cap2, ck.encoders["lrl"]).rows,
                  train_split.sample_ids)
    val = ds.splits["validation"]
    if sample_ids is None:
        sample_ids = [int(i) for i in val.sample_ids]
    lookup = {}
    for name in ("validation", "train_bilingual"):
        s = ds.splits[name]
        for pos, sid in enumerate(s.sample_ids):
            lookup[int(sid)] = (s, pos)
    for sid in sample_ids:
        if sid not in lookup:
            raise UsageError(f"unknown sample id {sid} (not in validation or train_bilingual)")
    records = []
    stored_ids = queue.ids
    for sid in sample_ids:
        split, pos = lookup[sid]
        query = encode_caption(split.cap1[pos:pos + 1], ck.encoders["hrl"]).rows[0]
        _, idx, sim = queue.nearest_pair(query)
        match = int(stored_ids[idx])
        records.append({"sample_id": sid, "query_concept": int(split.concept_ids[pos]),
                        "match_id": match, "match_concept": ds.concept_of(match), "similarity": sim})
    rate = float(np.mean([r["query_concept"] == r["match_concept"] for r in records])) if records else 0.0
    return records, rate


def cmd_inspect_nn(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    ds = datagen.load(args.dataset)
    records, rate = inspect_nn(ck, ds, args.ids or None)
    print("sample_id\tquery_concept\tmatch_id\tmatch_concept\tsimilarity")
    for r in records:
        print(f"{r['sample_id']}\t{r['query_concept']}\t{r['match_id']}\t{r['match_concept']}\t{r['similarity']:.6f}")
    print(f"concept match rate: {rate:.3f} over {len(records)} queries")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bivgs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, variant=False):
        sp.add_argument("--config", help="flat YAML run configuration")
        sp.add_argument("--seed", type=int, help="run a single seed instead of the config's list")
        sp.add_argument("--out", help="output directory (overrides config and OUT_DIR)")
        if variant:
            sp.add_argument("--variant", action="append", help="variant name; repeatable")

    sp = sub.add_parser("generate", help="generate and save synthetic datasets")
    common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("pretrain", help="monolingual HRL pretraining")
    common(sp)
    sp.add_argument("--dataset", help="dataset directory (default: generated under --out)")
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("train", help="bilingual-stage training for one or more variants")
    common(sp, variant=True)
    sp.add_argument("--dataset")
    sp.add_argument("--init", help="pretrained checkpoint for BilingualPHRL / Ours")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="recall@K of a checkpoint on the validation split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", help="write the report CSV here")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("run-matrix", help="every variant x seed, with summary and figures")
    common(sp, variant=True)
    sp.set_defaults(func=cmd_run_matrix)

    sp = sub.add_parser("inspect-nn", help="show queue-selected neighbours of chosen samples")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--ids", type=int, nargs="*", help="sample ids (default: all validation)")
    sp.set_defaults(func=cmd_inspect_nn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, FormatError, FileNotFoundError, KeyError) as exc:
        print(f"bivgs: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BivgsError as exc:
        print(f"bivgs: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
