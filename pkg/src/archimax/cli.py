"""Command-line interface.

Subcommands: simulate, eval-stdf, tailcoeff, chi, fit (theta | pickands |
radial | all), test, preprocess.  Every command writes its outputs plus a
JSON manifest (command echo, seed, versions, output digests); report-style
commands also render PNG figures next to their CSV output unless
``--no-plot`` is given.

Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4
capability gap.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import load_config, model_to_dict, write_manifest
from .errors import CapabilityError, NumericalError, ValidationError
from .extremal import chi_curve_empirical, limit_stdf_eval, pairwise_limit_lambda
from .inference import (
    block_maxima,
    cfg_pickands,
    cluster_profile_fit,
    fit_cluster_pairs,
    homogeneity_analysis,
    pseudo_observations,
)
from .radial_fit import RadialFitConfig, fit_radial
from .sampler import sample_clustered


def _parse_pairs(text):
    pairs = []
    for item in text.split(","):
        bits = item.strip().split("-")
        if len(bits) != 2:
            raise ValidationError(f"pair {item!r} is not of the form i-j",
                                  code="schema")
        i, j = (int(b) for b in bits)
        if i < 1 or j < 1 or i == j:
            raise ValidationError(f"bad pair {item!r}", code="schema")
        pairs.append((i - 1, j - 1))
    return pairs


def _parse_vector(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ValidationError(f"bad vector {text!r}: {exc}", code="schema")


def _parse_grid(text):
    bits = text.split(":")
    if len(bits) != 3:
        raise ValidationError("grid must be lo:hi:count", code="schema")
    lo, hi, count = float(bits[0]), float(bits[1]), int(bits[2])
    return np.linspace(lo, hi, count)


def _read_data(path):
    frame = pd.read_csv(path)
    if frame.shape[0] < 1 or frame.shape[1] < 2:
        raise ValidationError(f"{path} holds no usable data", code="schema")
    return frame


def _pick_seed(args, cfg=None):
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if cfg is not None and cfg.seed is not None:
        return int(cfg.seed)
    return 0


def _out_path(args):
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _finish(args, command, config_echo, seed, outputs, started):
    base = Path(args.out)
    manifest = base.with_name(base.name + ".manifest.json")
    write_manifest(
        manifest, command,
        {k: v for k, v in vars(args).items() if k != "func" and v is not None},
        config_echo, seed, outputs, started,
    )
    for path in list(outputs) + [manifest]:
        print(path)


# -- commands -----------------------------------------------------------------


def cmd_simulate(args):
    started = time.time()
    cfg = load_config(args.config)
    model = cfg.model()
    seed = _pick_seed(args, cfg)
    u = sample_clustered(model, args.n, seed)
    out = _out_path(args)
    frame = pd.DataFrame(u, columns=[f"u{i + 1}" for i in range(model.d)])
    frame.to_csv(out, index=False)
    _finish(args, "simulate", model_to_dict(model, seed), seed, [out], started)


def cmd_eval_stdf(args):
    started = time.time()
    cfg = load_config(args.config)
    model = cfg.model()
    seed = _pick_seed(args, cfg)
    x = _parse_vector(args.x)
    report = limit_stdf_eval(model, x, n_mc=args.n_mc, seed=seed)
    out = _out_path(args)
    doc = {
        "x": x.tolist(),
        "estimate": report.estimate,
        "std_error": report.std_error,
        "n_mc": report.n_mc,
        "classes": [
            {"kind": c.kind, "rho": c.rho} for c in report.classes
        ],
    }
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _finish(args, "eval-stdf", model_to_dict(model, seed), seed, [out], started)


def cmd_tailcoeff(args):
    started = time.time()
    cfg = load_config(args.config)
    model = cfg.model()
    seed = _pick_seed(args, cfg)
    (i, j), = _parse_pairs(args.pair)
    lam = pairwise_limit_lambda(model, i, j, n_mc=args.n_mc, seed=seed)
    out = _out_path(args)
    doc = {"pair": [i + 1, j + 1], "lambda": lam, "n_mc": args.n_mc}
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _finish(args, "tailcoeff", model_to_dict(model, seed), seed, [out], started)


def cmd_chi(args):
    started = time.time()
    frame = _read_data(args.data)
    data = frame.to_numpy(dtype=float)
    pairs = _parse_pairs(args.pairs)
    d = data.shape[1]
    for i, j in pairs:
        if i >= d or j >= d:
            raise ValidationError(f"pair ({i + 1},{j + 1}) outside the {d} columns",
                                  code="dim-mismatch")
    q_grid = _parse_grid(args.q_grid)
    model = None
    config_echo = None
    if args.config:
        cfg = load_config(args.config)
        model = cfg.model()
        config_echo = cfg.raw
        if model.d != d:
            raise ValidationError("config dimension does not match the data",
                                  code="dim-mismatch")
    out = _out_path(args)
    outputs = [out]
    rows = []
    for i, j in pairs:
        curve = chi_curve_empirical(data, i, j, q_grid)
        curve.insert(0, "pair", f"{i + 1}-{j + 1}")
        rows.append(curve)
        if not args.no_plot:
            true_lambda = None
            if model is not None:
                true_lambda = pairwise_limit_lambda(model, i, j, seed=_pick_seed(args))
            png = out.with_name(f"{out.stem}.{i + 1}-{j + 1}.png")
            from .plots import render_chi_curve

            render_chi_curve(curve, f"{i + 1}-{j + 1}", png, true_lambda)
            outputs.append(png)
    pd.concat(rows, ignore_index=True).to_csv(out, index=False)
    _finish(args, "chi", config_echo, _pick_seed(args), outputs, started)


def _pair_matrix(d, values):
    mat = np.full((d, d), np.nan)
    for (i, j), v in values.items():
        mat[i, j] = mat[j, i] = v
    return mat


def _matrix_frame(mat):
    d = mat.shape[0]
    return pd.DataFrame(mat, columns=[f"u{i + 1}" for i in range(d)])


def _fit_theta_stage(pobs, cfg, n_nodes):
    profile = cluster_profile_fit(pobs, cfg.families, n_nodes=n_nodes)
    two_moment = fit_cluster_pairs(pobs, cfg.families, n_nodes=n_nodes)
    doc = {
        "n": pobs.n,
        "families": list(cfg.families),
        "theta_bar": profile.theta_bar.tolist(),
        "vartheta_cluster": profile.vartheta_cluster.tolist(),
        "cluster_fit_flags": list(profile.flags),
        "pairwise_theta": {
            f"{i + 1}-{j + 1}": v for (i, j), v in sorted(profile.theta_pairwise.items())
        },
        "two_moment_pairs": {
            f"{i + 1}-{j + 1}": {
                "theta": f.theta, "vartheta": f.vartheta, "flag": f.flag,
                "tau": f.tau, "ltm": f.ltm,
            }
            for (i, j), f in sorted(two_moment.items())
        },
    }
    return profile, doc


def _vartheta_or_ones(cfg):
    out = []
    for k, s in enumerate(cfg.stdfs):
        out.append(getattr(s, "vartheta", 1.0) if s is not None else 1.0)
    return out


def cmd_fit(args):
    started = time.time()
    cfg = load_config(args.config, allow_partial=True)
    frame = _read_data(args.data)
    data = frame.to_numpy(dtype=float)
    pobs = pseudo_observations(data, cfg.partition)
    out = _out_path(args)
    outputs = []
    doc = {"stage": args.stage, "n": pobs.n}

    profile = None
    if args.stage in ("theta", "pickands", "all"):
        profile, theta_doc = _fit_theta_stage(pobs, cfg, args.n_nodes)
        doc["theta"] = theta_doc
    if args.stage == "theta" or args.stage == "all":
        mat = _pair_matrix(pobs.u.shape[1], profile.theta_pairwise)
        csv = out.with_name(out.name + ".theta_pairwise.csv")
        _matrix_frame(mat).to_csv(csv, index=False)
        outputs.append(csv)
        if not args.no_plot:
            from .plots import render_matrix

            png = out.with_name(out.name + ".theta_pairwise.png")
            render_matrix(mat, png, "pairwise distortion estimates")
            outputs.append(png)
    if args.stage in ("pickands", "all"):
        doc["pickands"] = _fit_pickands_stage(pobs, cfg, profile, out, outputs,
                                              args.no_plot)
    if args.stage in ("radial", "all"):
        doc["radial"] = _fit_radial_stage(pobs, cfg, profile, out, outputs,
                                          args.no_plot, args.n_nodes)

    report = out.with_name(out.name + ".json")
    report.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    outputs.insert(0, report)
    _finish(args, f"fit {args.stage}", cfg.raw, _pick_seed(args, cfg), outputs,
            started)


def _fit_pickands_stage(pobs, cfg, profile, out, outputs, no_plot):
    part = pobs.partition
    lam = {}
    a_bary = []
    curves_rows = []
    curves_by_cluster = {}
    w_grid = np.linspace(0.02, 0.98, 41)
    clamped = 0
    for k, block in enumerate(part.blocks):
        fam = cfg.families[k]
        theta_k = profile.theta_bar[k]
        theta_k = max(theta_k, 1.0) if fam == "joe" else max(theta_k, 1e-6)
        ub = pobs.u[:, list(block)]
        dk = len(block)
        a_bary.append(cfg_pickands(ub, theta_k, fam, np.full(dk, 1.0 / dk)))
        alpha = 1.0 / theta_k if (fam == "joe" and theta_k > 1.0) else 1.0
        for ii in range(dk):
            for jj in range(ii + 1, dk):
                i, j = block[ii], block[jj]
                pair_u = pobs.u[:, [i, j]]
                a_vals = np.array([
                    cfg_pickands(pair_u, theta_k, fam, np.array([w, 1.0 - w]))
                    for w in w_grid
                ])
                raw_half = cfg_pickands(pair_u, theta_k, fam,
                                        np.array([0.5, 0.5]), clamp=False)
                clamped += int(not 0.5 <= raw_half <= 1.0)
                a_half = min(1.0, max(raw_half, 0.5))
                lam[(i, j)] = float(np.clip(2.0 - (2.0 * a_half) ** alpha, 0.0, 1.0))
                label = f"{i + 1}-{j + 1}"
                curves_by_cluster.setdefault(k, {})[label] = (w_grid, a_vals)
                for w, a in zip(w_grid, a_vals):
                    curves_rows.append((k + 1, label, w, a))
    lam_mat = _pair_matrix(pobs.u.shape[1], lam)
    csv = out.with_name(out.name + ".lambda_pairwise.csv")
    _matrix_frame(lam_mat).to_csv(csv, index=False)
    outputs.append(csv)
    curves = pd.DataFrame(curves_rows, columns=["cluster", "pair", "w", "a"])
    curves_csv = out.with_name(out.name + ".pickands_curves.csv")
    curves.to_csv(curves_csv, index=False)
    outputs.append(curves_csv)
    if not no_plot:
        from .plots import render_matrix, render_pickands_curves

        png = out.with_name(out.name + ".lambda_pairwise.png")
        render_matrix(lam_mat, png, "pairwise upper tail dependence")
        outputs.append(png)
        for k, curves_k in sorted(curves_by_cluster.items()):
            png = out.with_name(out.name + f".pickands_c{k + 1}.png")
            render_pickands_curves(curves_k, png, f"cluster {k + 1}")
            outputs.append(png)
    return {
        "a_barycenter": a_bary,
        "lambda": {f"{i + 1}-{j + 1}": v for (i, j), v in sorted(lam.items())},
        "clamped_pairs": clamped,
    }


def _fit_radial_stage(pobs, cfg, profile, out, outputs, no_plot, n_nodes):
    # the pair mixture involves generators only; a placeholder extremal
    # part keeps the model object valid when the config omits stdfs
    if all(g is not None for g in cfg.generators):
        model = cfg.model_with([g.theta for g in cfg.generators],
                               varthetas=_vartheta_or_ones(cfg))
    else:
        if profile is None:
            profile = cluster_profile_fit(pobs, cfg.families, n_nodes=n_nodes)
        model = cfg.model_with(profile.theta_bar,
                               varthetas=profile.vartheta_cluster)
    res = fit_radial(pobs, model, RadialFitConfig(n_nodes=n_nodes))
    rho = {k: f.rho for k, f in res.pairwise.items()}
    mat = _pair_matrix(pobs.u.shape[1], rho)
    csv = out.with_name(out.name + ".rho_pairwise.csv")
    _matrix_frame(mat).to_csv(csv, index=False)
    outputs.append(csv)
    if not no_plot:
        from .plots import render_matrix

        png = out.with_name(out.name + ".rho_pairwise.png")
        render_matrix(mat, png, "pairwise radial correlations")
        outputs.append(png)
    return {
        "generators": [g.to_dict() for g in model.generators],
        "averaged": {f"{k + 1}-{l + 1}": v for (k, l), v in sorted(res.averaged.items())},
        "flags": {f"{i + 1}-{j + 1}": f for (i, j), f in sorted(res.flags.items())},
    }


def cmd_test(args):
    started = time.time()
    cfg = load_config(args.config, allow_partial=True)
    frame = _read_data(args.data)
    pobs = pseudo_observations(frame.to_numpy(dtype=float), cfg.partition)
    seed = _pick_seed(args, cfg)
    res = homogeneity_analysis(
        pobs, cfg.families, n_nodes=args.n_nodes, n_mc=args.n_mc, seed=seed,
        scaling=args.scaling,
    )
    p_value = {"sup": res.p_sup, "euclid": res.p_euclid}.get(args.norm)
    doc = {
        "n": res.n,
        "norm": args.norm,
        "scaling": res.scaling,
        "p_sup": res.p_sup,
        "p_euclid": res.p_euclid,
        "p_value": p_value,
        "theta_bar": res.theta_bar.tolist(),
        "vartheta_cluster": res.vartheta_cluster.tolist(),
        "t": [
            {"cluster": k + 1, "i": i + 1, "j": j + 1, "value": float(t)}
            for (k, i, j), t in zip(res.index, res.t)
        ],
        "sigma": res.sigma.tolist(),
    }
    out = _out_path(args)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _finish(args, "test", cfg.raw, seed, [out], started)


def cmd_preprocess(args):
    started = time.time()
    frame = _read_data(args.data)
    months = None
    if args.months:
        months = [int(m) for m in args.months.split(",")]
    reduced, report = block_maxima(frame, date_col=args.date_col,
                                   months=months, block=args.block)
    out = _out_path(args)
    reduced.to_csv(out, index=False)
    _finish(args, "preprocess", {"blocks": report}, _pick_seed(args), [out],
            started)


# -- parser --------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="archimax",
        description="Clustered Archimax copulas: simulate, analyze, fit, test.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeded=True):
        p.add_argument("--out", required=True, help="output file or prefix")
        p.add_argument("--threads", type=int, default=None,
                       help="cap on worker threads (results never depend on it)")
        if seeded:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("simulate", help="draw a sample from a model config")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, default=1000)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval-stdf", help="evaluate the limiting stdf at x")
    p.add_argument("--config", required=True)
    p.add_argument("--x", required=True, help="comma-separated coordinates")
    p.add_argument("--n-mc", type=int, default=200_000)
    common(p)
    p.set_defaults(func=cmd_eval_stdf)

    p = sub.add_parser("tailcoeff", help="limiting tail coefficient of a pair")
    p.add_argument("--config", required=True)
    p.add_argument("--pair", required=True, help="e.g. 1-2")
    p.add_argument("--n-mc", type=int, default=200_000)
    common(p)
    p.set_defaults(func=cmd_tailcoeff)

    p = sub.add_parser("chi", help="empirical tail dependence curves")
    p.add_argument("--data", required=True)
    p.add_argument("--pairs", required=True, help="e.g. 1-2,4-7")
    p.add_argument("--q-grid", default="0.8:0.995:40")
    p.add_argument("--config", default=None,
                   help="optional model config for reference lines")
    p.add_argument("--no-plot", action="store_true")
    common(p)
    p.set_defaults(func=cmd_chi)

    p = sub.add_parser("fit", help="fit model components to data")
    p.add_argument("stage", choices=["theta", "pickands", "radial", "all"])
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True,
                   help="partition + families (parameters optional)")
    p.add_argument("--n-nodes", type=int, default=64)
    p.add_argument("--no-plot", action="store_true")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="within-cluster homogeneity test")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--norm", choices=["sup", "euclid", "both"], default="both")
    p.add_argument("--scaling", choices=["sqrt-n", "raw"], default="sqrt-n")
    p.add_argument("--n-mc", type=int, default=100_000)
    p.add_argument("--n-nodes", type=int, default=64)
    common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("preprocess", help="block maxima of timestamped series")
    p.add_argument("--data", required=True)
    p.add_argument("--date-col", default="date")
    p.add_argument("--months", default=None, help="e.g. 9,10,11,12")
    p.add_argument("--block", choices=["month", "year"], default="month")
    common(p)
    p.set_defaults(func=cmd_preprocess)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
