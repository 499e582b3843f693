"""Command-line interface: simulate, fit, evaluate, replicate.

Every command writes a manifest carrying the artifact version, the
effective configuration and its hash; re-running with the same manifest
inputs reproduces the outputs bit for bit.  Exit codes: 0 success,
2 validation error, 3 numeric failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    CholeskyPair,
    OrderedDag,
    RegressionData,
    SparseCoefState,
    load_matrix_csv,
    mcd_compose,
    save_matrix_csv,
)
from .dag_wishart import DagWishartParams, posterior_mode_d_j
from .errors import DagregError, NumericError, ValidationError
from .ess import EssConfig, ess_run
from .metrics import (
    dag_edge_vector,
    effective_sample_size,
    nanmean_with_count,
    relative_errors,
    selection_metrics,
)
from .selection import (
    ChainRecord,
    config_sha256,
    estimate_B_from_chain,
    estimate_L_from_chain,
    mpm_select_dag,
    mpm_select_gamma,
)
from .simulate import SimSpec, generate, load_bundle, save_bundle
from .tes import TesConfig, compute_error_estimate, tes_run

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _write_manifest(path: Path, command: str, config: dict) -> None:
    manifest = {
        "artifact_version": __version__,
        "command": command,
        "config": config,
        "config_sha256": config_sha256(config),
    }
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config file must hold a flat JSON object")
    return cfg


def _merge_config(defaults: dict, file_cfg: dict, args, keys) -> dict:
    """defaults < config file < explicit CLI flags."""
    out = dict(defaults)
    for k, v in file_cfg.items():
        if k not in defaults:
            raise ValidationError(f"unknown config key {k!r}")
        out[k] = v
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _sampler_defaults(method: str) -> dict:
    common = {"iterations": 3000, "burn_in": 1000, "thin": 1, "seed": 0,
              "eta2": None, "c": 10.0}
    if method == "ess":
        return {**common, "eta1": None, "tau1_sq": 1.0}
    return {**common, "alpha": 0.999, "kappa": 0.1, "nu0": 0.0, "c1": 2.0, "cap_rj": None}


def _build_sampler_config(method: str, merged: dict, q: int):
    dag = None
    if merged["eta2"] is not None or merged["c"] != 10.0:
        dag = DagWishartParams.default(q, eta2=merged["eta2"], c=merged["c"])
    keys = ("iterations", "burn_in", "thin", "seed")
    base = {k: merged[k] for k in keys}
    if method == "ess":
        return EssConfig(**base, eta1=merged["eta1"], tau1_sq=merged["tau1_sq"], dag=dag)
    return TesConfig(**base, alpha=merged["alpha"], kappa=merged["kappa"],
                     nu0=merged["nu0"], c1=merged["c1"], R=merged["cap_rj"], dag=dag)


def _load_fit_inputs(args) -> RegressionData:
    if args.data is not None:
        root = Path(args.data)
        x_path, y_path = root / "X.csv", root / "Y.csv"
    else:
        if args.x is None or args.y is None:
            raise ValidationError("fit needs either --data BUNDLE or both --x and --y")
        x_path, y_path = Path(args.x), Path(args.y)
    for path in (x_path, y_path):
        if not path.is_file():
            raise ValidationError(f"input file not found: {path}")
    return RegressionData(load_matrix_csv(x_path), load_matrix_csv(y_path))


def cmd_simulate(args) -> int:
    spec = SimSpec(scenario=args.scenario, setting=args.setting, seed=args.seed,
                   n=args.n, p=args.p, q=args.q)
    data, truth = generate(spec)
    root = save_bundle(args.out, spec, data, truth)
    print(f"wrote bundle {root}")
    return EXIT_OK


def _write_estimates(out: Path, data: RegressionData, gamma_hat, B_hat, dag_hat, chol_hat):
    save_matrix_csv(out / "Gamma_hat.csv", gamma_hat)
    save_matrix_csv(out / "B_hat.csv", B_hat.B)
    save_matrix_csv(out / "L_hat.csv", chol_hat.L)
    save_matrix_csv(out / "D_hat.csv", chol_hat.d)
    (out / "dag_hat.json").write_text(dag_hat.to_json())
    save_matrix_csv(out / "Omega_hat.csv", mcd_compose(chol_hat))


def cmd_fit(args) -> int:
    data = _load_fit_inputs(args)
    method = args.method
    file_cfg = _load_config_file(args.config)
    merged = _merge_config(_sampler_defaults(method), file_cfg, args,
                           keys=list(_sampler_defaults(method)))
    cfg = _build_sampler_config(method, merged, data.q)

    warm = None
    if args.warm_start is not None:
        wpath = Path(args.warm_start)
        if not wpath.is_file():
            raise ValidationError(f"warm start file not found: {wpath}")
        warm = SparseCoefState.from_dense(load_matrix_csv(wpath))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if method == "ess":
        chain = ess_run(data, cfg, warm_start=warm)
        chain.save(out / "chain_ess")
        gamma_hat = mpm_select_gamma(chain)
        B_hat = estimate_B_from_chain(chain, gamma_hat)
        dag_hat = mpm_select_dag(chain)
        l_pair = estimate_L_from_chain(chain, dag_hat)
        # diagonal via its conditional posterior mode on the estimated errors
        err = compute_error_estimate(data, B_hat)
        dagp = cfg.resolved(data)[1]
        stilde = (data.n * err.Shat + dagp.U) / data.n
        d_hat = np.array([posterior_mode_d_j(stilde, dag_hat, j, data.n, dagp.c)
                          for j in range(data.q)])
        chol_hat = CholeskyPair(l_pair.L, d_hat)
        _write_estimates(out, data, gamma_hat, B_hat, dag_hat, chol_hat)
        save_matrix_csv(out / "E_hat.csv", err.Ehat)
        save_matrix_csv(out / "S_hat.csv", err.Shat)
        timings = chain.timings
        chains = {"ess": chain}
    else:
        res = tes_run(data, cfg, warm_start=warm)
        res.step1.save(out / "chain_tes_step1")
        res.step2.save(out / "chain_tes_step2")
        _write_estimates(out, data, res.gamma_hat, res.B_hat, res.dag_hat, res.chol_hat)
        save_matrix_csv(out / "E_hat.csv", res.error.Ehat)
        save_matrix_csv(out / "S_hat.csv", res.error.Shat)
        timings = res.timings
        chains = {"tes_step1": res.step1, "tes_step2": res.step2}

    (out / "timing.json").write_text(json.dumps(timings, indent=1, sort_keys=True))
    _write_manifest(out / "manifest.json", f"fit {method}", merged)
    if args.export_csv:
        for name, chain in chains.items():
            for attr in ("gammas", "betas", "edges", "L", "d"):
                a = getattr(chain, attr)
                if a is not None:
                    flat = a.reshape(a.shape[0], -1)
                    save_matrix_csv(out / f"draws_{name}_{attr}.csv", flat)
    print(f"fit {method}: wrote {out}")
    return EXIT_OK


def _evaluate_estimates(est_dir: Path, truth_bundle: Path) -> list[dict]:
    for path in (est_dir / "Gamma_hat.csv", est_dir / "dag_hat.json", est_dir / "Omega_hat.csv"):
        if not path.is_file():
            raise ValidationError(f"estimate file not found: {path}")
    data, truth, manifest = load_bundle(truth_bundle)
    gamma_hat = load_matrix_csv(est_dir / "Gamma_hat.csv").astype(np.uint8)
    dag_hat = OrderedDag.from_json((est_dir / "dag_hat.json").read_text())
    omega_hat = load_matrix_csv(est_dir / "Omega_hat.csv")

    records = []

    def emit(metric, value):
        records.append({
            "scenario": manifest["scenario"], "setting": manifest["setting"],
            "replicate": manifest["seed"], "metric": metric,
            "value": None if (isinstance(value, float) and np.isnan(value)) else value,
        })

    g_scores = selection_metrics(gamma_hat, truth.B0.Gamma)
    for name, v in g_scores._asdict().items():
        emit(f"gamma_{name}", v)
    d_scores = selection_metrics(dag_edge_vector(dag_hat), dag_edge_vector(truth.dag0))
    for name, v in d_scores._asdict().items():
        emit(f"dag_{name}", v)
    omega0 = np.linalg.inv(truth.Sigma0)
    errs = relative_errors(omega_hat, omega0)
    for name, v in errs._asdict().items():
        emit(f"omega_{name}", v)

    # chain-efficiency diagnostics over the true-nonzero coordinates
    for label, summary in _chain_ess_summaries(est_dir, truth).items():
        for stat, v in summary.items():
            emit(f"ess_{label}_{stat}", v)
    return records


def _ess_distribution(series_list):
    vals = [effective_sample_size(s) for s in series_list if len(s) >= 8]
    if not vals:
        return {}
    return {"min": float(np.min(vals)), "median": float(np.median(vals)),
            "max": float(np.max(vals)), "count": len(vals)}


def _chain_ess_summaries(est_dir: Path, truth) -> dict:
    """Effective sample sizes per true-nonzero coordinate, when the fit
    directory carries the chains to compute them from."""
    out = {}
    b_mask = truth.B0.Gamma == 1
    edge_mask = truth.dag0.edge_matrix() == 1
    for base in ("chain_ess", "chain_tes_step1", "chain_tes_step2"):
        path = est_dir / f"{base}.npz"
        if not path.is_file():
            continue
        chain = ChainRecord.load(est_dir / base)
        tag = base.removeprefix("chain_")
        if chain.betas is not None and b_mask.shape == chain.betas.shape[1:]:
            out[f"{tag}_b"] = _ess_distribution(chain.betas[:, b_mask].T)
        elif chain.gammas is not None and b_mask.shape == chain.gammas.shape[1:]:
            out[f"{tag}_b"] = _ess_distribution(chain.gammas[:, b_mask].astype(float).T)
        if chain.L is not None and edge_mask.shape == chain.L.shape[1:]:
            out[f"{tag}_l"] = _ess_distribution(chain.L[:, edge_mask].T)
        elif chain.edges is not None and edge_mask.shape == chain.edges.shape[1:]:
            out[f"{tag}_l"] = _ess_distribution(chain.edges[:, edge_mask].astype(float).T)
        if chain.d is not None:
            out[f"{tag}_d"] = _ess_distribution(chain.d.T)
    return {k: v for k, v in out.items() if v}


def _aggregate_records(records) -> dict:
    by_metric: dict[str, list] = {}
    for r in records:
        by_metric.setdefault(r["metric"], []).append(
            np.nan if r["value"] is None else r["value"]
        )
    aggregate = {}
    for metric, values in sorted(by_metric.items()):
        mean, skipped = nanmean_with_count(values)
        aggregate[metric] = {"mean": None if np.isnan(mean) else mean,
                             "n": len(values), "undefined": skipped}
    return aggregate


def cmd_evaluate(args) -> int:
    records = _evaluate_estimates(Path(args.estimates), Path(args.truth))
    if args.method:
        for r in records:
            r["method"] = args.method
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(records, indent=1))
    if args.csv:
        first = records[0]
        meta = argparse.Namespace(scenario=first["scenario"], setting=first["setting"],
                                  method=args.method or "")
        _write_table_csv(Path(args.csv), meta, _aggregate_records(records))
    print(f"wrote {out}")
    return EXIT_OK


def _one_replicate(payload):
    """Worker: simulate, fit, evaluate one replicate; returns its records."""
    (rep, base_args) = payload
    args = argparse.Namespace(**base_args)
    args.seed = base_args["seed"] + rep
    rep_dir = Path(base_args["out"]) / f"rep_{rep:03d}"
    args.out = str(rep_dir)
    spec = SimSpec(scenario=args.scenario, setting=args.setting, seed=args.seed,
                   n=args.n, p=args.p, q=args.q)
    data, truth = generate(spec)
    bundle = save_bundle(rep_dir, spec, data, truth)
    fit_args = argparse.Namespace(
        method=args.method, data=str(bundle), x=None, y=None, out=str(rep_dir / "fit"),
        config=args.config, warm_start=None, export_csv=False,
        iterations=args.iterations, burn_in=args.burn_in, thin=args.thin, seed=args.seed,
        eta1=getattr(args, "eta1", None), tau1_sq=getattr(args, "tau1_sq", None),
        eta2=getattr(args, "eta2", None), c=None,
        alpha=getattr(args, "alpha", None), kappa=getattr(args, "kappa", None),
        nu0=getattr(args, "nu0", None), c1=getattr(args, "c1", None),
        cap_rj=getattr(args, "cap_rj", None),
    )
    cmd_fit(fit_args)
    records = _evaluate_estimates(rep_dir / "fit", bundle)
    for r in records:
        r["method"] = args.method
        r["replicate"] = rep
    return records


def cmd_replicate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base_args = vars(args).copy()
    payloads = [(rep, base_args) for rep in range(args.count)]
    all_records: list[dict] = []
    failures: list[dict] = []
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = {rep: pool.submit(_one_replicate, payload)
                       for rep, payload in enumerate(payloads)}
            for rep, fut in futures.items():
                try:
                    all_records.extend(fut.result())
                except DagregError as exc:
                    failures.append({"replicate": rep, "error": str(exc)})
    else:
        for payload in payloads:
            try:
                all_records.extend(_one_replicate(payload))
            except DagregError as exc:
                failures.append({"replicate": payload[0], "error": str(exc)})

    # aggregate to a Table-1 style layout: one row per metric family
    aggregate = _aggregate_records(all_records)
    summary = {
        "scenario": args.scenario, "setting": args.setting, "method": args.method,
        "count": args.count, "base_seed": args.seed,
        "aggregate": aggregate, "failures": failures,
    }
    (out / "records.json").write_text(json.dumps(all_records, indent=1))
    (out / "aggregate.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    _write_table_csv(out / "table.csv", args, aggregate)
    _write_manifest(out / "manifest.json", "replicate", {
        k: v for k, v in vars(args).items() if k != "func" and v is not None
    })
    print(f"replicates done: {args.count - len(failures)}/{args.count} succeeded; wrote {out}")
    return EXIT_OK


def _write_table_csv(path: Path, args, aggregate: dict) -> None:
    """One row per selection target with the four selection scores."""
    cols = ["sensitivity", "specificity", "precision", "mcc"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "setting", "method", "target"] + cols)
        for target in ("gamma", "dag"):
            row = [args.scenario, args.setting, args.method, target]
            for col in cols:
                cell = aggregate.get(f"{target}_{col}", {})
                mean = cell.get("mean")
                row.append("NA" if mean is None else f"{mean:.4f}")
            writer.writerow(row)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dagreg", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic data bundle")
    sim.add_argument("--scenario", type=int, required=True)
    sim.add_argument("--setting", type=int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--p", type=int, default=None)
    sim.add_argument("--q", type=int, default=None)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    def add_sampler_flags(sp):
        sp.add_argument("--iterations", type=int, default=None)
        sp.add_argument("--burn-in", dest="burn_in", type=int, default=None)
        sp.add_argument("--thin", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--eta1", type=float, default=None)
        sp.add_argument("--eta2", type=float, default=None)
        sp.add_argument("--tau1-sq", dest="tau1_sq", type=float, default=None)
        sp.add_argument("--alpha", type=float, default=None)
        sp.add_argument("--kappa", type=float, default=None)
        sp.add_argument("--nu0", type=float, default=None)
        sp.add_argument("--c1", type=float, default=None)
        sp.add_argument("--cap-Rj", dest="cap_rj", type=int, default=None)
        sp.add_argument("--config", default=None, help="flat JSON config file")

    fit = sub.add_parser("fit", help="run a sampler on data")
    fit.add_argument("--method", choices=("ess", "tes"), required=True)
    fit.add_argument("--data", default=None, help="bundle directory with X.csv and Y.csv")
    fit.add_argument("--x", default=None)
    fit.add_argument("--y", default=None)
    fit.add_argument("--out", required=True)
    fit.add_argument("--warm-start", dest="warm_start", default=None,
                     help="CSV of initial B (supports taken from nonzeros)")
    fit.add_argument("--export-csv", dest="export_csv", action="store_true")
    add_sampler_flags(fit)
    fit.set_defaults(func=cmd_fit)

    ev = sub.add_parser("evaluate", help="score estimates against ground truth")
    ev.add_argument("--estimates", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--method", default=None)
    ev.add_argument("--out", required=True)
    ev.add_argument("--csv", default=None, help="also write a summary-table CSV here")
    ev.set_defaults(func=cmd_evaluate)

    rep = sub.add_parser("replicate", help="simulate + fit + evaluate over seeds")
    rep.add_argument("--scenario", type=int, required=True)
    rep.add_argument("--setting", type=int, default=1)
    rep.add_argument("--method", choices=("ess", "tes"), required=True)
    rep.add_argument("--count", type=int, default=10)
    rep.add_argument("--workers", type=int, default=1)
    rep.add_argument("--n", type=int, default=None)
    rep.add_argument("--p", type=int, default=None)
    rep.add_argument("--q", type=int, default=None)
    rep.add_argument("--out", required=True)
    add_sampler_flags(rep)
    rep.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except DagregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
