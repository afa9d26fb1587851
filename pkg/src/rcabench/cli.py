"""Command-line front end.

Exit codes: 0 success, 1 config error, 2 partial case failures, 3 empty evaluation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import campaign
from .campaign import ConfigError
from .evaluation import EmptyResultsError

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_EMPTY = 0, 1, 2, 3


def _config(args) -> campaign.CampaignConfig:
    source = args.config
    if source is None and args.out and (Path(args.out) / "config.yaml").is_file():
        source = Path(args.out) / "config.yaml"
    return campaign.load_config(source, seed=args.seed, out=args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rcabench", description="Generate and evaluate RCA benchmark campaigns.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="campaign config (YAML); defaults to <out>/config.yaml when present")
        sp.add_argument("--out", help="campaign directory")
        sp.add_argument("--seed", type=int, help="override the global seed")

    g = sub.add_parser("generate", help="simulate every planned case")
    common(g)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True,
                   help="skip cases that are already complete")

    v = sub.add_parser("validate", help="impact verdicts, pattern classes and the exclusion list")
    common(v)

    e = sub.add_parser("evaluate", help="rank HasAnomaly cases with the configured algorithms")
    common(e)
    e.add_argument("--algorithms", help="comma-separated algorithm names")
    e.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; cases are scored in order")

    s = sub.add_parser("stats", help="dataset statistics")
    common(s)

    a = sub.add_parser("audit", help="observability completeness per case")
    common(a)

    sc = sub.add_parser("scalability", help="algorithm time versus trace volume")
    common(sc)
    sc.add_argument("--algorithms", default="simple_rca")
    sc.add_argument("--volumes", default=",".join(str(v) for v in campaign.DEFAULT_VOLUMES))
    sc.add_argument("--runs", type=int, default=3)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "generate":
            res = campaign.generate(cfg, jobs=args.jobs, resume=args.resume)
            print(f"generated {len(res.done)}, skipped {len(res.skipped)}, failed {len(res.failed)}")
            return res.exit_code
        if args.command == "validate":
            res = campaign.validate(cfg)
            print(f"validated {len(res.done)} cases; summary in {Path(cfg.out) / 'validation' / 'summary.tsv'}")
            return res.exit_code
        if args.command == "evaluate":
            algos = args.algorithms.split(",") if args.algorithms else None
            report = campaign.evaluate(cfg, algorithms=algos)
            for r in report.rows:
                print(f"{r.algorithm}\tn={r.n}\ttop1={r.top1:.3f}\ttop3={r.top3:.3f}\tmrr={r.mrr:.3f}")
            return EXIT_OK
        if args.command == "stats":
            st = campaign.stats(cfg)
            for k, val in st.rows():
                print(f"{k}\t{val}")
            return EXIT_OK
        if args.command == "audit":
            rows = campaign.audit(cfg)
            bad = sum(1 for r in rows if not r["complete"])
            print(f"audited {len(rows)} cases, {bad} incomplete")
            return EXIT_OK
        if args.command == "scalability":
            vols = [int(x) for x in args.volumes.split(",") if x]
            pts = campaign.scalability(cfg, args.algorithms.split(",")[0], vols, args.runs)
            for pt in pts:
                print(f"{pt.volume}\t{pt.traces}\t{pt.seconds:.4f}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyResultsError as exc:
        print(f"empty: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
