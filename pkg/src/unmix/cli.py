"""Command-line interface.

Subcommands
-----------
identify   analyze a tensor JSON file: genericity, local identification,
           and (for d = 2) complete enumeration of the identified set
estimate   fit the unmixing matrix to a data CSV by minimum distance
test       J-test of a pattern, or C-test of a nested pattern pair
simulate   run a Monte Carlo campaign from a JSON config; CSV summary on
           stdout, files and figures in --output-dir
cumulants  print the sample moment or k-statistic tensor of a data CSV

stdout carries machine-readable output only (JSON, or CSV for simulate);
diagnostics go to stderr.  Exit codes: 0 success, 2 invalid inputs or
configuration, 3 estimation failure (non-convergence).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .datagen import ScenarioCell, model_from_config, run_campaign
from .estimator import EstimatorOptions, RestrictionSpec, estimate
from .inference import c_test, j_test
from .metrics import align_to_reference
from .moments import kstatistic, load_data_csv, sample_moments
from .restrictions import (
    check_genericity,
    enumerate_identified_set_2d,
    explore_identified_set,
    in_identified_set,
    local_identification_test,
    make_pattern,
)
from .tensors import SymmetricTensor

log = logging.getLogger("unmix")

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_NO_CONVERGENCE = 3


def _read_json_file(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})")


def _load_tensor(path) -> SymmetricTensor:
    return SymmetricTensor.from_json_dict(_read_json_file(path))


def _load_matrix(path) -> np.ndarray:
    obj = _read_json_file(path)
    if isinstance(obj, dict):
        obj = obj.get("A", obj.get("matrix"))
    A = np.asarray(obj, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{path}: expected a square matrix")
    return A


def _parse_index_list(text, what):
    try:
        raw = json.loads(text)
        out = [tuple(int(i) - 1 for i in idx) for idx in raw]
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ValueError(f"--{what} must be a JSON list of 1-based index lists: {exc}")
    return out


def _build_pattern(args, d: int, r: int):
    indices = _parse_index_list(args.indices, "indices") if args.indices else None
    targets = json.loads(args.targets) if args.targets else None
    return make_pattern(args.pattern, d, r, indices=indices, targets=targets)


def _emit(payload: str, output):
    sys.stdout.write(payload)
    if not payload.endswith("\n"):
        sys.stdout.write("\n")
    if output:
        with open(output, "w") as fh:
            fh.write(payload)
            if not payload.endswith("\n"):
                fh.write("\n")


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2)


# ----------------------------------------------------------------------
# subcommands


def _cmd_identify(args) -> int:
    T = _load_tensor(args.tensor)
    pattern = _build_pattern(args, T.d, T.r)
    gen = check_genericity(T, pattern, tol=args.tol)
    report = {
        "d": T.d,
        "r": T.r,
        "pattern": pattern.to_json_dict(),
        "genericity": gen.to_json_dict(),
    }
    eye = np.eye(T.d)
    if in_identified_set(eye, T, pattern, tol=args.tol):
        ok, kdim = local_identification_test(T, pattern, eye)
        report["identity_is_member"] = True
        report["locally_identified_at_identity"] = ok
        report["kernel_dimension_at_identity"] = kdim
    else:
        report["identity_is_member"] = False
    if T.d == 2:
        try:
            sols = enumerate_identified_set_2d(T, pattern, tol=args.tol)
            report["identified_set"] = {
                "finite": True,
                "count": len(sols),
                "matrices": [Q.tolist() for Q in sols],
            }
        except ValueError as exc:
            report["identified_set"] = {"finite": False, "reason": str(exc)}
    elif args.explore:
        found = explore_identified_set(T, pattern, n_starts=args.explore,
                                       seed=args.seed, tol=args.tol)
        report["explored_solutions"] = [
            {
                "Q": e["Q"].tolist(),
                "residual": e["residual"],
                "is_signed_permutation": e["is_signed_permutation"],
                "hits": e["hits"],
            }
            for e in found
        ]
        report["explore_note"] = (
            "random multistart search; absence of non-permutation solutions "
            "here is evidence, not proof"
        )
    _emit(_json_text(report), args.output)
    return EXIT_OK


def _estimator_options(args) -> EstimatorOptions:
    kw = dict(
        weighting=args.weighting,
        n_starts=args.starts,
        seed=args.seed,
        bootstrap_draws=args.bootstrap_draws,
    )
    if getattr(args, "max_iter", None):
        kw["max_iterations"] = args.max_iter
    return EstimatorOptions(**kw)


def _build_spec(args, d: int) -> RestrictionSpec:
    pattern = _build_pattern(args, d, args.order)
    return RestrictionSpec(pattern=pattern, stat=args.stat,
                           include_mean=args.include_mean)


def _cmd_estimate(args) -> int:
    Y = load_data_csv(args.data)
    spec = _build_spec(args, Y.shape[1])
    opts = _estimator_options(args)
    result = estimate(Y, spec, opts)
    payload = result.to_json_dict()
    if args.reference:
        ref = _load_matrix(args.reference)
        aligned, P = align_to_reference(result.A_hat, ref)
        payload["aligned_A_hat"] = aligned.tolist()
        payload["alignment"] = P.tolist()
    _emit(_json_text(payload), args.output)
    if not result.converged:
        log.error("estimation did not converge")
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _cmd_test(args) -> int:
    Y = load_data_csv(args.data)
    spec = _build_spec(args, Y.shape[1])
    opts = _estimator_options(args)
    if args.sub_pattern or args.sub_indices:
        sub_kind = args.sub_pattern or "custom"
        sub_idx = _parse_index_list(args.sub_indices, "sub-indices") if args.sub_indices else None
        sub_tg = json.loads(args.sub_targets) if args.sub_targets else None
        spec_sub = RestrictionSpec(
            pattern=make_pattern(sub_kind, Y.shape[1], args.order,
                                 indices=sub_idx, targets=sub_tg),
            stat=args.stat, include_mean=args.include_mean,
        )
        result = c_test(Y, spec, spec_sub, opts)
    else:
        result = j_test(Y, spec, opts)
    _emit(_json_text(result.to_json_dict()), args.output)
    ests = [result.estimate, result.estimate_sub]
    if any(e is not None and not e.converged for e in ests):
        log.error("an underlying estimation did not converge")
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _cell_from_config(cfg: dict, position: int) -> ScenarioCell:
    try:
        model = model_from_config(cfg["model"])
        order = int(cfg["order"])
        pattern = make_pattern(
            cfg.get("pattern", "diagonal"), model.d, order,
            indices=[tuple(int(i) - 1 for i in idx) for idx in cfg["indices"]]
            if "indices" in cfg else None,
            targets=cfg.get("targets"),
        )
        spec = RestrictionSpec(pattern=pattern, stat=cfg.get("stat", "cumulant"),
                               include_mean=bool(cfg.get("include_mean", False)))
        opts = EstimatorOptions(
            weighting=cfg.get("weighting", "efficient"),
            n_starts=int(cfg.get("starts", 6)),
            seed=int(cfg.get("seed", 0)),
            bootstrap_draws=int(cfg.get("bootstrap_draws", 200)),
        )
        return ScenarioCell(
            name=str(cfg.get("name", f"cell{position}")),
            model=model, spec=spec, n=int(cfg["n"]),
            replicates=int(cfg["replicates"]),
            A0=np.asarray(cfg["A0"], dtype=float) if "A0" in cfg else None,
            opts=opts, seed=int(cfg.get("seed", 0)),
        )
    except KeyError as exc:
        raise ValueError(f"simulation cell #{position}: missing field {exc}")


def _cmd_simulate(args) -> int:
    from . import report as report_mod

    cfg = _read_json_file(args.config)
    if not isinstance(cfg, dict) or "cells" not in cfg or not cfg["cells"]:
        raise ValueError(f"{args.config}: config must contain a nonempty 'cells' list")
    cells = [_cell_from_config(c, k) for k, c in enumerate(cfg["cells"])]
    rows = run_campaign(cells, n_jobs=args.threads)
    text = report_mod.summary_csv_text(rows)
    sys.stdout.write(text)
    if args.output_dir:
        paths = report_mod.write_summary(rows, args.output_dir)
        paths += report_mod.render_figures(rows, args.output_dir)
        for p in paths:
            log.info("wrote %s", p)
    return EXIT_OK


def _cmd_cumulants(args) -> int:
    Y = load_data_csv(args.data)
    if args.stat == "cumulant":
        T = kstatistic(Y, args.order)
    else:
        T = sample_moments(Y, args.order)[args.order]
    _emit(_json_text(T.to_json_dict()), args.output)
    return EXIT_OK


# ----------------------------------------------------------------------
# argument parsing


def _add_pattern_args(p: argparse.ArgumentParser):
    p.add_argument("--pattern", default="diagonal",
                   choices=("diagonal", "reflectional", "mean_independence",
                            "minimal", "custom"),
                   help="which coordinates of the transformed tensor are restricted")
    p.add_argument("--indices", default=None,
                   help="custom pattern: JSON list of 1-based multi-indices, "
                        'e.g. "[[1,2,2],[1,1,2]]"')
    p.add_argument("--targets", default=None,
                   help="JSON list of target values aligned with the pattern "
                        "indices (default: all zero)")


def _add_spec_args(p: argparse.ArgumentParser):
    p.add_argument("--order", type=int, default=4,
                   help="tensor order r of the restricted statistic (default 4)")
    p.add_argument("--stat", default="cumulant", choices=("moment", "cumulant"),
                   help="restrict raw moments or k-statistics (default cumulant)")
    _add_pattern_args(p)
    p.add_argument("--include-mean", action="store_true",
                   help="append the transformed mean to the fitted conditions")


def _add_estimator_args(p: argparse.ArgumentParser):
    p.add_argument("--weighting", default="identity",
                   choices=("identity", "efficient", "plug_in", "bootstrap", "iterated"),
                   help="weight matrix for the distance form (default identity)")
    p.add_argument("--starts", type=int, default=20,
                   help="number of multistart initializations (default 20)")
    p.add_argument("--bootstrap-B", dest="bootstrap_draws", type=int, default=200,
                   help="bootstrap draws for the covariance estimate (default 200)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--max-iter", type=int, default=None,
                   help="cap on minimizer iterations per start")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unmix",
        description="identification and minimum-distance estimation of linear "
                    "mixing models from zero restrictions on moment and "
                    "cumulant tensors",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="info-level diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identify", help="identification analysis of a tensor")
    p.add_argument("tensor", help="tensor JSON file ({d, r, entries:[{index, value}]})")
    _add_pattern_args(p)
    p.add_argument("--tol", type=float, default=None,
                   help="membership tolerance (default: 1e-8 * max(1, ||T||))")
    p.add_argument("--explore", type=int, default=0, metavar="N",
                   help="for d >= 3: random-start search with N starts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None, help="also write the JSON report here")
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("estimate", help="fit the unmixing matrix to data")
    p.add_argument("data", help="CSV of observations, one row per observation")
    _add_spec_args(p)
    _add_estimator_args(p)
    p.add_argument("--reference", default=None,
                   help="JSON file with a reference matrix to align the estimate to")
    p.add_argument("--output", default=None, help="also write the JSON result here")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("test", help="J-test of a pattern or C-test of a nested pair")
    p.add_argument("data", help="CSV of observations")
    _add_spec_args(p)
    _add_estimator_args(p)
    p.add_argument("--sub-pattern", default=None,
                   choices=("diagonal", "reflectional", "mean_independence",
                            "minimal", "custom"),
                   help="nested (smaller) pattern: run the C-test against it")
    p.add_argument("--sub-indices", default=None,
                   help="indices of the nested pattern when it is custom")
    p.add_argument("--sub-targets", default=None)
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_test)

    p = sub.add_parser("simulate", help="Monte Carlo campaign from a JSON config")
    p.add_argument("config", help="campaign config JSON (see README)")
    p.add_argument("--threads", type=int, default=os.cpu_count(),
                   help="worker processes (default: all cores)")
    p.add_argument("--output-dir", default=None,
                   help="write summary.csv, summary.json, and figures here")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("cumulants", help="print a sample tensor of the data")
    p.add_argument("data", help="CSV of observations")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--stat", default="cumulant", choices=("moment", "cumulant"))
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_cumulants)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_BAD_INPUT
    except np.linalg.LinAlgError as exc:
        log.error("linear algebra failure: %s", exc)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
