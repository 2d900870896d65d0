"""Command line entry points.

Commands operate on the same artifacts the service does: a config file
names the log directory, and any process that opens it sees the full
event history and audit trail. ``simulate`` writes traffic and ground
truth; ``report`` re-reads the log from scratch and composes the gated
report; ``aa-pool`` and ``quality-check`` are self-contained probes.

Output is a structured JSON document with --format json (the default is
a fixed-width table for reading at the terminal). Hidden comparative
columns render as "HIDDEN (SRM)" in table mode; the JSON document
carries the same gating flags structurally.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import PlatformConfig, load_config
from .errors import SplitLabError
from .quality import aa_pool_run
from .runtime import Platform
from .simulator import load_scenario

FORMAT_JSON = "json"
FORMAT_TABLE = "table"


def _emit(document: dict, fmt: str, table_renderer) -> None:
    if fmt == FORMAT_JSON:
        print(json.dumps(document, indent=2, sort_keys=True))
    else:
        table_renderer(document)


def _table(headers: list[str], rows: list[list]) -> None:
    cells = [[str(c) for c in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in cells:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))


def _load_platform_config(args) -> PlatformConfig:
    if args.config:
        return load_config(args.config)
    return PlatformConfig()


# -- renderers -------------------------------------------------------------


def _render_report_table(document: dict) -> None:
    print(f"experiment {document['experiment_key']}  "
          f"status {document['status']}  watermark {document['watermark']}")
    srm = document["srm"]
    if srm is None:
        print("srm: not computed (no data)")
    else:
        verdict = "FLAGGED" if srm["flagged"] else "ok"
        print(f"srm: chi2 {srm['chi_square']:.3f}  p {srm['p_value']:.3g}  "
              f"{verdict}")
    print(f"unknown identifier rate: {document['unknown_identifier_rate']:.2%}")
    for warning in document["warnings"]:
        print(f"warning [{warning['code']}]: {warning['message']}")
    rows = []
    for block in document["blocks"]:
        if block["hidden"]:
            rows.append([block["metric_name"], block["role"],
                         "HIDDEN (SRM)", "", "", "", "", ""])
            continue
        for cell in block["cells"]:
            comparison = ""
            for comp in block["comparisons"]:
                if comp["variant_index"] == cell["variant_index"]:
                    test = comp["test"]
                    if test is None:
                        comparison = comp["note"]
                    else:
                        comparison = (f"diff {test['estimate_diff']:+.5f} "
                                      f"ci [{test['ci_low']:+.5f}, "
                                      f"{test['ci_high']:+.5f}] "
                                      f"p {test['p_value']:.4g}")
            rows.append([block["metric_name"], block["role"],
                         f"v{cell['variant_index']}", cell["n"], cell["x"],
                         f"{cell['mean']:.5f}",
                         "" if block["direction_ok"] is None
                         else ("as expected" if block["direction_ok"]
                               else "OPPOSITE"),
                         comparison])
        if not block["cells"]:
            rows.append([block["metric_name"], block["role"], "-", "", "",
                         "", "", block["note"]])
    _table(["metric", "role", "variant", "n", "x", "mean", "direction",
            "comparison"], rows)
    divergence = document.get("divergence")
    if divergence:
        flag = "FLAGGED" if divergence["any_flagged"] else "ok"
        print(f"pipeline divergence: {flag} "
              f"({len(divergence['rows'])} cells compared)")


def _render_truth_table(document: dict) -> None:
    print(f"scenario ground truth (seed {document['seed']})")
    rows = [["recruited", *document["recruited"]],
            ["intended", *document["intended_recruited"]],
            ["attrited", *document["attrited"]],
            ["converters", *document["converters"]],
            ["real sums", *(f"{s:.2f}" for s in document["real_sums"])]]
    _table(["quantity", *(f"v{i}" for i in range(len(document["recruited"])))],
           rows)
    print(f"unknown {document['unknown_count']}  "
          f"out-of-exposure {document['out_of_exposure']}  "
          f"malicious {document['malicious_count']}  "
          f"events {document['n_events']}")


def _render_aa_table(document: dict) -> None:
    print(f"AA pool: {document['n_experiments']} experiments, "
          f"alpha {document['alpha']}")
    print(f"false positive rate {document['rate']:.4f}  "
          f"99% band [{document['interval_low']:.4f}, "
          f"{document['interval_high']:.4f}]  "
          f"calibrated: {document['calibrated']}")
    print(f"srm flags: {document['srm_flags']}  "
          f"max p-value decile deviation "
          f"{document['max_decile_deviation']:.4f}")
    _table(["decile", "fraction"],
           [[f"{i / 10:.1f}-{(i + 1) / 10:.1f}", f"{f:.4f}"]
            for i, f in enumerate(document["decile_fractions"])])


def _render_check_table(document: dict) -> None:
    print(f"controlled-input check: {document['status']}")
    _table(["pipeline", "metric", "field", "expected", "observed", "deficit"],
           [[r["pipeline"], r["metric_name"], r["field"], r["expected"],
             r["observed"], r["deficit"]]
            for r in document["mismatches"]])


def _render_search_table(document: dict) -> None:
    _table(["key", "status", "team", "area", "primary metric", "updated"],
           [[r["experiment_key"], r["state"], r["team"], r["product_area"],
             (r["preregistration"] or {}).get("primary_metric", ""),
             r["updated_at"]]
            for r in document["experiments"]])


# -- commands ----------------------------------------------------------------


def _cmd_serve(args) -> int:
    from .service import serve

    serve(_load_platform_config(args))
    return 0


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    with Platform(_load_platform_config(args)) as platform:
        truth = platform.simulate(scenario)
    _emit(truth.to_dict(), args.format, _render_truth_table)
    return 0


def _cmd_report(args) -> int:
    with Platform(_load_platform_config(args)) as platform:
        platform.tick()
        platform.run_batch()
        report = platform.compose_report(args.key)
    _emit(report.to_dict(), args.format, _render_report_table)
    return 0


def _cmd_aa_pool(args) -> int:
    result = aa_pool_run(args.n, per_experiment_n=args.per_experiment_n,
                         seed=args.seed if args.seed is not None else 0)
    _emit(result.to_dict(), args.format, _render_aa_table)
    return 0


def _cmd_quality_check(args) -> int:
    with Platform(_load_platform_config(args)) as platform:
        result = platform.quality_check()
    _emit(result.to_dict(), args.format, _render_check_table)
    return 0 if result.passed else 1


def _cmd_search(args) -> int:
    with Platform(_load_platform_config(args)) as platform:
        records = platform.registry.search(
            status=args.status, team=args.team,
            product_area=args.product_area, metric=args.metric,
            free_text=" ".join(args.free_text) if args.free_text else None)
    document = {"experiments": [r.to_dict() for r in records]}
    _emit(document, args.format, _render_search_table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitlab",
        description="desk-scale controlled-experiment platform")

    def add_common(target, suppress):
        # The common flags are legal both before and after the
        # subcommand; the subparser copy must not clobber a value the
        # top-level parse already set, hence SUPPRESS defaults there.
        kwargs = {"default": argparse.SUPPRESS} if suppress else {}
        target.add_argument("--config", help="path to a JSON config file",
                            **({"default": None} if not suppress else kwargs))
        target.add_argument("--seed", type=int,
                            help="override the random seed where one applies",
                            **({"default": None} if not suppress else kwargs))
        target.add_argument("--format", choices=(FORMAT_JSON, FORMAT_TABLE),
                            help="output format",
                            **({"default": FORMAT_TABLE}
                               if not suppress else kwargs))

    add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text, run):
        cmd = sub.add_parser(name, help=help_text)
        add_common(cmd, suppress=True)
        cmd.set_defaults(run=run)
        return cmd

    command("serve", "run the HTTP service", _cmd_serve)

    simulate = command("simulate", "run a scenario file", _cmd_simulate)
    simulate.add_argument("scenario", help="path to a scenario JSON file")

    report = command("report", "compose one experiment's report", _cmd_report)
    report.add_argument("key", help="experiment key")

    aa = command("aa-pool", "run an AA calibration pool", _cmd_aa_pool)
    aa.add_argument("n", type=int, help="number of AA experiments")
    aa.add_argument("--per-experiment-n", type=int, default=10_000,
                    help="visitors per arm in each AA experiment")

    command("quality-check", "run the controlled-input probe end to end",
            _cmd_quality_check)

    search = command("search", "search the experiment registry", _cmd_search)
    search.add_argument("free_text", nargs="*", help="free-text needle")
    search.add_argument("--status")
    search.add_argument("--team")
    search.add_argument("--product-area", dest="product_area")
    search.add_argument("--metric")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except SplitLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
