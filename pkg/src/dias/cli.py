"""Command-line entry point: ``dias <command>`` with shared --config/--seed/--out flags."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig, load_config
from .core import LocalBatch
from .corpus import SynthSpec, gen_synth, read_corpus, separation, write_corpus
from .evaluation import evaluate, five_fold_eval
from .experiments import ablation, format_table, gradient_suite, sparsifier_comparison, summarize
from .interaction import pair_globals, similarity_matrix
from .sparse import conditional_probabilities, hard_mask, thresholds_for
from .spatial import distance_histogram, inter_residual, intra_distance, intra_residual
from .train import load_params, save_state, train

log = logging.getLogger("dias")


def _config(args) -> TrainConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides({"seed": args.seed, "synth": {"seed": args.seed}})
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_synth(args) -> int:
    cfg = _config(args)
    over = {k: v for k, v in (("num_pairs", args.num_pairs), ("latent_dim", args.latent_dim),
                              ("noise_sigma", args.noise)) if v is not None}
    if args.d_in is not None:
        over.update(d_in_image=args.d_in, d_in_text=args.d_in)
    spec = SynthSpec(**{**cfg.to_dict()["synth"], **over})
    synth = gen_synth(spec)
    path = write_corpus(synth.corpus, _out(args), args.name)
    matched, unmatched = separation(synth)
    print(json.dumps({"manifest": str(path), "num_pairs": spec.num_pairs,
                      "matched_cosine": matched, "unmatched_cosine": unmatched}))
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.epochs is not None:
        cfg = cfg.with_overrides({"epochs": args.epochs})
    out = _out(args)
    corpus = read_corpus(args.corpus)
    val = read_corpus(args.val_corpus) if args.val_corpus else None
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")
    res = train(corpus, cfg, log_path=out / "train_log.jsonl", val_corpus=val)
    save_state(res.state, out / "state.npz")
    (out / "eval_report.json").write_text(res.final_report.to_json() + "\n")
    print(json.dumps({"initial_rsum": res.initial_val_rsum, "final_rsum": res.final_val_rsum,
                      "state": str(out / "state.npz")}))
    return 0


def cmd_eval(args) -> int:
    corpus = read_corpus(args.corpus)
    params, _ = load_params(args.state)
    cfg = _config(args)
    rep = (five_fold_eval(corpus, params, args.folds, cfg.eval_chunk) if args.folds > 1
           else evaluate(corpus, params, cfg.eval_chunk))
    text = rep.to_json()
    (_out(args) / "eval_report.json").write_text(text + "\n")
    print(text)
    return 0


def cmd_gradcheck(args) -> int:
    rows = gradient_suite(sizes=args.n, dims=args.dim, seed=args.seed or 0, tolerance=args.tolerance)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["term", "n", "dim", "parameter", "max_rel_error", "passed"])
    for r in rows:
        w.writerow([r.term, r.n, r.dim, r.parameter, f"{r.max_rel_error:.3e}", int(r.passed)])
    return 0 if all(r.passed for r in rows) else 1


def _sample(args, cfg):
    """Projected local batches for a random sample of images (first matched text each)."""
    corpus = read_corpus(args.corpus)
    params, betas = load_params(args.state)
    rng = np.random.default_rng(cfg.seed)
    idx = np.sort(rng.choice(corpus.num_images, size=min(args.limit, corpus.num_images), replace=False))
    with torch.no_grad():
        imgs = LocalBatch.from_arrays([corpus.images[i] for i in idx]).project(params.weight_image, params.bias_image)
        txts = LocalBatch.from_arrays([corpus.texts[corpus.text_ids[i][0]] for i in idx]).project(
            params.weight_text, params.bias_text)
    return imgs, txts, betas


def _residual(kind, imgs, txts):
    if kind == "inter":
        return inter_residual(1.0 - similarity_matrix(imgs, txts))
    v_hat, t_hat = pair_globals(imgs, txts)
    n = torch.arange(len(imgs))
    return intra_residual(intra_distance(v_hat[n, n], t_hat[n, n]))


def cmd_histogram(args) -> int:
    cfg = _config(args)
    imgs, txts, _ = _sample(args, cfg)
    with torch.no_grad():
        if args.kind == "inter":
            D = 1.0 - similarity_matrix(imgs, txts)
            values = D[~torch.eye(len(imgs), dtype=torch.bool)]
        elif args.kind == "probability":
            values = conditional_probabilities(_residual("inter", imgs, txts)).values.flatten()
        else:
            v_hat, t_hat = pair_globals(imgs, txts)
            n = torch.arange(len(imgs))
            dist = intra_distance(v_hat[n, n], t_hat[n, n])
            M = dist.image_values if args.kind == "image" else dist.text_values
            values = M[torch.triu(torch.ones_like(M, dtype=torch.bool), 1)]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["bin_start", "bin_end", "count"])
    for lo, hi, c in distance_histogram(values.numpy().tolist(), args.bins):
        w.writerow([f"{lo:.6g}", f"{hi:.6g}", c])
    return 0


def cmd_inspect_mask(args) -> int:
    cfg = _config(args)
    imgs, txts, betas = _sample(args, cfg)
    with torch.no_grad():
        res = _residual(args.kind, imgs, txts)
        b = betas[:2] if args.kind == "inter" else betas[2:]
        th = thresholds_for(res, b[0], b[1])
        mask = hard_mask(res, th, cfg.objective.threshold_space).values
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["i", "j", "residual", "threshold_row", "threshold_col", "selected"])
    n = res.n
    for i in range(n):
        for j in range(n):
            w.writerow([i, j, f"{float(res.values[i, j]):.6g}", f"{float(th.row_thresholds[i]):.6g}",
                        f"{float(th.col_thresholds[j]):.6g}", int(mask[i, j])])
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    corpus = read_corpus(args.corpus)
    run = ablation if args.study == "ablation" else sparsifier_comparison
    records = run(corpus, seeds=args.seeds, base=cfg)
    out = _out(args)
    with open(out / f"{args.study}_runs.jsonl", "w") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    print(format_table(summarize(records)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dias", description=__doc__)
    p.add_argument("--config", help="JSON config file (defaults apply for missing keys)")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="write a shared-latent synthetic corpus")
    g.add_argument("--num-pairs", type=int)
    g.add_argument("--latent-dim", type=int)
    g.add_argument("--d-in", type=int)
    g.add_argument("--noise", type=float)
    g.add_argument("--name", default="corpus")
    g.set_defaults(fn=cmd_gen_synth)

    t = sub.add_parser("train", help="train projection heads; writes log, state and report")
    t.add_argument("--corpus", required=True, help="corpus manifest (.json)")
    t.add_argument("--val-corpus", help="separate validation manifest")
    t.add_argument("--epochs", type=int)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="R@K / rSum report for a trained state")
    e.add_argument("--corpus", required=True)
    e.add_argument("--state", required=True)
    e.add_argument("--folds", type=int, default=1)
    e.set_defaults(fn=cmd_eval)

    gc = sub.add_parser("gradcheck", help="finite-difference check of every loss term")
    gc.add_argument("--n", type=int, nargs="+", default=[2, 4, 6])
    gc.add_argument("--dim", type=int, nargs="+", default=[4, 8])
    gc.add_argument("--tolerance", type=float, default=1e-4)
    gc.set_defaults(fn=cmd_gradcheck)

    for name, fn, kinds, default in (("histogram", cmd_histogram, ("inter", "image", "text", "probability"), "inter"),
                                     ("inspect-mask", cmd_inspect_mask, ("inter", "intra"), "inter")):
        h = sub.add_parser(name)
        h.add_argument("--corpus", required=True)
        h.add_argument("--state", required=True)
        h.add_argument("--kind", choices=kinds, default=default)
        h.add_argument("--limit", type=int, default=200 if name == "histogram" else 8,
                       help="number of sampled images")
        if name == "histogram":
            h.add_argument("--bins", type=int, default=20)
        h.set_defaults(fn=fn)

    c = sub.add_parser("compare", help="ablation or sparsifier comparison table")
    c.add_argument("--corpus", required=True)
    c.add_argument("--study", choices=("ablation", "sparsifier"), default="ablation")
    c.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    c.set_defaults(fn=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s %(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"dias: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
