"""Command-line front end: train, eval, bench-sampling, serve.

Every run is reproducible from (config file, seed): training logs and
checkpoints are byte-identical across reruns.  Step logs are written as CSV,
reports as JSON, and each report carries the config hash plus a build id
fingerprinting the checkpoint parameters it was produced from.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline, sampler, transformer
from .configs import RunConfig, SampleConfig
from .data import gen_synthetic_dataset, make_mask, resolve_bucket
from .metrics import diversity_score, get_extractor

BENCH_TOP_K = (1, 5, 20)
BENCH_TIMED_RUNS = 5          # timing = median of these, after one warm-up


def _load_config(path: str) -> RunConfig:
    try:
        return RunConfig.load(path)
    except FileNotFoundError:
        raise SystemExit(f"config file not found: {path}")
    except (ValueError, TypeError, KeyError) as e:
        raise SystemExit(f"invalid config {path}: {e}")


def _write_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _write_report(path: Path, report: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    ckpt_dir = Path(args.ckpt or cfg.out_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    # materialized copy: every default spelled out, auditable after the fact
    cfg.save(ckpt_dir / "config.json")

    logs = pipeline.train(cfg, str(ckpt_dir), args.stage)
    for stage, rows in logs.items():
        log_path = ckpt_dir / f"log_{stage}.csv"
        _write_csv(log_path, rows)
        last = rows[-1]
        tail = ", ".join(f"{k}={v:.4g}" for k, v in last.items()
                         if k != "step" and isinstance(v, float))
        print(f"[{stage}] {len(rows)} log rows -> {log_path} (final: {tail})")
    print(f"checkpoints in {ckpt_dir} (config hash {cfg.config_hash()})")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    buckets = [b.strip() for b in args.buckets.split(",") if b.strip()]
    if not buckets:
        raise SystemExit("--buckets must name at least one mask bucket")
    for b in buckets:
        resolve_bucket(b)

    bundle = pipeline.load_bundle(args.ckpt, cfg)
    report = pipeline.evaluate(bundle, cfg, buckets, cfg.sample)
    report["build_id"] = pipeline.bundle_build_id(args.ckpt)

    out = Path(args.ckpt) / "eval_report.json"
    _write_report(out, report)
    _print_eval_table(report)
    print(f"report -> {out}")
    return 0


def _print_eval_table(report: dict) -> None:
    cells = ("top1_coarse", "top1_refined", "random_coarse", "random_refined",
             "baseline", "diversity")
    header = "bucket     " + "".join(f"{c:>16}" for c in cells)
    print(header)
    for bucket, stats in report["buckets"].items():
        row = f"{bucket:<11}"
        for c in cells:
            row += f"{stats[c]['median']:>16.3f}"
        print(row + "   (median)")


# ---------------------------------------------------------------------------
# bench-sampling


def _bench_cell(bundle, cfg: RunConfig, seq, w, mode: str, top_k: int,
                logp: np.ndarray, hidden: np.ndarray, fx) -> dict:
    """One (mode, top_k) cell: timing, forward counts, diversity, NLL."""
    vcfg, tcfg = cfg.vq, cfg.transformer
    scfg = SampleConfig(mode=mode, top_k=min(top_k, vcfg.codebook_size),
                        num_samples=cfg.sample.num_samples,
                        seed=cfg.sample.seed)
    walls, rep = [], None
    for run in range(BENCH_TIMED_RUNS + 1):
        rep = sampler.sample_batch(bundle.tf_params, seq, w, tcfg, vcfg, scfg)
        if run > 0:                       # first run warms caches, not timed
            walls.append(rep.wall_clock)

    # NLL of the drawn hidden tokens under the single-pass distribution
    nlls = []
    for s in range(rep.indices.shape[0]):
        picked = np.take_along_axis(logp, rep.indices[s][..., None], -1)[..., 0]
        nlls.append(-float(picked[hidden].mean()))

    decs = [sampler.decode_indices(bundle.codec_params, rep.indices[s], vcfg,
                                   vcfg.latent_size, vcfg.latent_size)[0]
            for s in range(rep.indices.shape[0])]
    return {
        "wall_clock_s": float(np.median(walls)),
        "forward_passes": rep.forward_passes // scfg.num_samples,
        "diversity": diversity_score(np.stack(decs), fx),
        "nll": float(np.mean(nlls)),
    }


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    bundle = pipeline.load_bundle(args.ckpt, cfg)
    vcfg = cfg.vq
    fx = get_extractor()

    # one held-out image under a fully hidden mask: every token must be sampled
    ds = gen_synthetic_dataset(cfg.data)
    if len(ds.test) == 0:
        raise SystemExit("test set is empty; set data.test_count > 0")
    image = ds.test[0]
    mask = make_mask(np.zeros(image.shape[:2], np.float32)).bitmap
    _, seq, w = pipeline._token_inputs(bundle, cfg, image, mask)
    hidden = w < 1.0

    logits = transformer.logits_from_tokens(
        bundle.tf_params, seq, w, cfg.transformer, vcfg).data.astype(np.float64)
    logits -= logits.max(-1, keepdims=True)
    logp = logits - np.log(np.exp(logits).sum(-1, keepdims=True))

    grid: dict[str, dict] = {"one_time": {}, "autoregressive": {}}
    for mode in grid:
        for top_k in BENCH_TOP_K:
            grid[mode][str(top_k)] = _bench_cell(
                bundle, cfg, seq, w, mode, top_k, logp, hidden, fx)

    speedup = {k: grid["autoregressive"][k]["wall_clock_s"]
               / max(grid["one_time"][k]["wall_clock_s"], 1e-9)
               for k in map(str, BENCH_TOP_K)}
    report = {
        "config_hash": cfg.config_hash(),
        "build_id": pipeline.bundle_build_id(args.ckpt),
        "hidden_tokens": int(hidden.sum()),
        "num_samples": cfg.sample.num_samples,
        "timed_runs": BENCH_TIMED_RUNS,
        "grid": grid,
        "speedup": speedup,
    }
    out = Path(args.ckpt) / "bench_report.json"
    _write_report(out, report)
    for mode in grid:
        for k, cell in grid[mode].items():
            print(f"{mode:>15} top_k={k:<3} wall={cell['wall_clock_s']:.4f}s "
                  f"forwards={cell['forward_passes']} "
                  f"diversity={cell['diversity']:.4f} nll={cell['nll']:.3f}")
    print("speedup (autoregressive / one_time): "
          + ", ".join(f"top_k={k}: {v:.1f}x" for k, v in speedup.items()))
    print(f"report -> {out}")
    return 0


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load_config(args.config)
    app = create_app(cfg, args.ckpt)
    host = os.environ.get("PLURALFILL_BIND", "127.0.0.1")
    uvicorn.run(app, host=host, port=args.port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pluralfill",
        description="Train, evaluate, benchmark, and serve the completion pipeline.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one training stage or all three")
    t.add_argument("--stage", default="all",
                   choices=list(pipeline.STAGES) + ["all"])
    t.add_argument("--config", required=True)
    t.add_argument("--ckpt", default=None,
                   help="checkpoint directory (default: config out_dir)")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="per-bucket completion quality table")
    e.add_argument("--config", required=True)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--buckets", default="20-30,30-40,40-50")
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("bench-sampling",
                       help="one-shot vs autoregressive sampling cost grid")
    b.add_argument("--config", required=True)
    b.add_argument("--ckpt", required=True)
    b.set_defaults(fn=cmd_bench)

    s = sub.add_parser("serve", help="HTTP completion service")
    s.add_argument("--config", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--port", type=int, default=8080)
    s.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
