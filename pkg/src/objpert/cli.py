"""Command-line entry point ``objpert``.

Subcommands:
  account      sample a privacy bound on an alpha or epsilon grid into CSV
  calibrate    find the smallest sigma meeting an (epsilon, delta) target
  train        private logistic or linear regression from a CSV file
  risk-bound   excess-risk and GD iteration bounds as JSON

Exit codes: 0 success, 2 argument or domain error, 3 infeasible calibration,
4 optimiser non-convergence.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile

import numpy as np

from objpert import accounting, data, dp_core, glm_loss, plrv, risk, solver
from objpert.errors import CalibrationError, DomainError, NonConvergenceError

EXIT_OK, EXIT_DOMAIN, EXIT_INFEASIBLE, EXIT_NONCONVERGENCE = 0, 2, 3, 4

ACCOUNT_BOUNDS = ("rdp", "rdp-linearized", "rdp-nonglm", "hs", "kifer", "gaussian-lower", "plrv")
CALIBRATE_BOUNDS = {
    "hs": "hs_analytic",
    "kifer": "kifer",
    "rdp": "rdp_glm",
    "rdp-linearized": "rdp_linearized",
    "gaussian-lower": "gaussian_lower_hs",
    "amp-rdp": "amp_rdp",
    "amp-plrv": "amp_plrv",
}
TRAIN_BOUND = "amp_plrv"

# Defaults of the risk-bound subcommand; the Monte Carlo risk check reuses them.
RISK_DEFAULTS = dict(n=200, d=5, L=1.0, beta=1.0, lam=20.0, sigma=5.0, sigma_out=0.01,
                     tau=0.005, theta_star_norm=1.0, domain_norm=1.0)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_DOMAIN, f"{self.prog}: error: {message}\n")


def parse_grid(text):
    """'a:b:n' -> n linearly spaced points from a to b inclusive."""
    parts = text.split(":")
    if len(parts) != 3:
        raise DomainError(f"grid {text!r} must look like a:b:n")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise DomainError(f"grid {text!r} must look like a:b:n") from None
    if n < 1:
        raise DomainError("grid needs at least one point")
    return np.linspace(a, b, n)


def params_hash(payload):
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _hash_args(args, skip=("out", "func", "model_out", "report_out")):
    return params_hash({k: v for k, v in vars(args).items() if k not in skip})


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return "nan" if v is None or v is accounting.NOT_APPLICABLE else repr(float(v))


def _mech(args, check=True):
    p = accounting.MechanismParams(
        sigma=args.sigma, lam=args.lam, beta=args.beta, grad_bound=args.L,
        tau=args.tau, sigma_out=args.sigma_out, dim=args.dim,
    )
    if check and not p.lam > p.beta:
        raise DomainError(f"lambda ({p.lam}) must exceed beta ({p.beta})")
    return p


def account_rows(args):
    """(x, value, tolerance-or-None) rows and the bound label for ``account``."""
    bound = args.bound
    k = args.compositions
    if k < 1:
        raise DomainError("compositions must be at least 1")
    is_rdp = bound in ("rdp", "rdp-linearized", "rdp-nonglm") or (
        bound == "gaussian-lower" and args.alpha_grid is not None
    )
    if bound == "gaussian-lower":
        p = _mech(args, check=False)
        if not p.sigma > 0:
            raise DomainError("sigma must be positive")
    else:
        p = _mech(args)
    if is_rdp:
        alphas = dp_core.default_alpha_grid() if args.alpha_grid is None else parse_grid(args.alpha_grid)
        if np.any(alphas <= 1):
            raise DomainError("alpha grid must lie above 1")
        if bound == "rdp":
            kind = "amp_rdp" if p.tau > 0 else "rdp_glm"
            vals = accounting.amp_rdp(p, alphas)
        elif bound == "rdp-linearized":
            kind = "rdp_linearized"
            vals = np.array([accounting.objpert_rdp_linearized(p, a) for a in alphas])
        elif bound == "rdp-nonglm":
            kind = "rdp_nonglm"
            vals = np.array([accounting.objpert_rdp_nonglm(p, a) for a in alphas])
        else:
            kind = "gaussian_lower_rdp"
            vals = dp_core.gaussian_rdp(p.grad_bound, p.sigma, alphas)
        return [(a, k * v, None) for a, v in zip(alphas, np.atleast_1d(vals))], kind
    eps = np.linspace(0.0, 4.0, 81) if args.eps_grid is None else parse_grid(args.eps_grid)
    if bound in ("hs", "kifer", "gaussian-lower") and k != 1:
        raise DomainError(f"--compositions is only supported for rdp and plrv bounds")
    if bound == "hs":
        return [(e, accounting.objpert_hs_delta(p, e), None) for e in eps], "hs_analytic"
    if bound == "kifer":
        return [(e, accounting.kifer_delta(p, e), None) for e in eps], "kifer"
    if bound == "gaussian-lower":
        return [(e, dp_core.gaussian_hs_delta(p.grad_bound, p.sigma, e), None) for e in eps], \
            "gaussian_lower_hs"
    grid = plrv.build_amp_plrv(p, compositions=k)
    tol = plrv.tolerance(grid)
    return [(e, d, tol) for e, d in zip(eps, np.atleast_1d(plrv.delta_from_plrv(grid, eps)))], "plrv"


def cmd_account(args):
    rows, kind = account_rows(args)
    h = _hash_args(args)
    with_tol = args.bound == "plrv"
    lines = ["x,value,bound,params_hash" + (",tolerance" if with_tol else "")]
    for x, v, tol in rows:
        line = f"{float(x)!r},{_fmt(v)},{kind},{h}"
        if with_tol:
            line += f",{tol!r}"
        lines.append(line)
    write_atomic(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_calibrate(args):
    kind = CALIBRATE_BOUNDS[args.bound]
    p = _mech(args)
    sigma = accounting.calibrate_sigma(args.eps, args.delta, p, kind)
    achieved = accounting.delta_at(p.with_sigma(sigma), kind, args.eps)
    out = {"sigma": sigma, "bound": kind, "achieved_delta": achieved,
           "epsilon": args.eps, "delta": args.delta, "params_hash": _hash_args(args)}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def privacy_block(p, epsilon, delta):
    """Accounting of one released model, shared by ``train`` and tests."""
    grid = plrv.build_amp_plrv(p)
    achieved = float(plrv.delta_from_plrv(grid, epsilon))
    rdp_eps = dp_core.rdp_epsilon_to_dp(accounting.rdp_curve(p, "amp_rdp"), delta)
    return {
        "eps": epsilon, "delta": delta, "bound": TRAIN_BOUND, "achieved_delta": achieved,
        "tolerance": plrv.tolerance(grid), "sigma": p.sigma, "sigma_out": p.sigma_out,
        "tau": p.tau, "lambda": p.lam, "beta": p.beta, "grad_bound": p.grad_bound,
        "rdp_epsilon_at_delta": rdp_eps,
    }


def train(ds, loss_kind, epsilon, delta, lam, clip, tau, sigma_out, optimizer, seed,
          test_fraction, max_iters=None):
    """Calibrate, fit and evaluate; returns (model dict, report dict)."""
    base = glm_loss.get_loss(loss_kind)
    cl = glm_loss.ClippedGlmLoss(base, clip)
    train_ds, test_ds = data.split(ds, test_fraction, solver.RngSpec(seed))
    p = accounting.MechanismParams(sigma=1.0, lam=lam, beta=base.beta, grad_bound=cl.grad_bound,
                                   tau=tau, sigma_out=sigma_out, dim=ds.d, n=train_ds.n)
    if not p.lam > p.beta:
        raise DomainError(f"lambda ({lam}) must exceed the loss smoothness ({base.beta})")
    sigma = accounting.calibrate_sigma(epsilon, delta, p, TRAIN_BOUND)
    p = p.with_sigma(sigma)
    fit = solver.amp_fit(train_ds.X, train_ds.y, loss_kind, p, optimizer,
                         solver.RngSpec(seed), clip=clip, max_iters=max_iters)
    theta = fit.theta_tilde_p
    u = test_ds.X @ theta
    if loss_kind == "logistic":
        metric = {"accuracy": float(np.mean((u > 0) == (test_ds.y == 1)))}
        majority = float(max(np.mean(test_ds.y), 1 - np.mean(test_ds.y)))
        metric["majority_baseline"] = majority
    else:
        metric = {"rmse": float(np.sqrt(np.mean((u - test_ds.y) ** 2)))}
    model = {"theta": theta.tolist(), "loss": loss_kind,
             "preprocessing": {"normalize": ds.normalization,
                               "feature_names": list(ds.feature_names),
                               "label_map": ds.label_map}}
    report = {"grad_norm": fit.grad_norm_final, "iterations": fit.iterations,
              "optimizer": optimizer, "seed": seed, "n_train": train_ds.n, "n_test": test_ds.n,
              "test": metric, "privacy": privacy_block(p, epsilon, delta)}
    return model, report


def cmd_train(args):
    task = "binary_classification" if args.task == "logistic" else "regression"
    label_range = None
    if args.label_range:
        lo, hi = (float(v) for v in args.label_range.split(":"))
        label_range = (lo, hi)
    cats = [c for c in (args.categorical or "").split(",") if c]
    raw = data.load_csv(args.data, args.label_column, task, cats, label_range)
    ds = data.normalize_features(raw, args.normalize)
    loss_kind = "logistic" if args.task == "logistic" else "squared"
    model, report = train(ds, loss_kind, args.eps, args.delta, args.lam, args.clip, args.tau,
                          args.sigma_out, args.optimizer, args.seed, args.test_fraction, args.max_iters)
    h = _hash_args(args)
    model["params_hash"] = report["params_hash"] = h
    write_atomic(args.model_out, json.dumps(model, indent=2, default=str) + "\n")
    write_atomic(args.report_out, json.dumps(report, indent=2, default=str) + "\n")
    print(json.dumps(report, indent=2, default=str))
    return EXIT_OK


def cmd_risk_bound(args):
    r = risk.RiskInputs(n=args.n, d=args.d, L=args.L, beta=args.beta, lam=args.lam,
                        sigma=args.sigma, sigma_out=args.sigma_out, tau=args.tau,
                        theta_star_norm=args.theta_star_norm, domain_norm=args.domain_norm)
    gamma = args.tau if args.gamma is None else args.gamma
    r0 = args.theta_star_norm if args.r0 is None else args.r0
    out = {
        "errata": risk.excess_risk_bound(r, "errata"),
        "appendix": risk.excess_risk_bound(r, "appendix"),
        "gd_iterations": (risk.gd_iteration_bound(args.n, args.beta, args.lam, gamma, r0)
                          if gamma > 0 else None),
        "params_hash": _hash_args(args),
    }
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _mech_flags(p, sigma_required=True):
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--L", type=float, default=1.0, help="gradient bound (default 1)")
    if sigma_required:
        p.add_argument("--sigma", type=float, required=True)
    else:
        p.add_argument("--sigma", type=float, default=1.0, help=argparse.SUPPRESS)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--sigma-out", dest="sigma_out", type=float, default=0.0)
    p.add_argument("--dim", type=int, default=1, help="dimension for rdp-nonglm")


def build_parser():
    parser = _Parser(prog="objpert", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("account", help="emit a privacy curve as CSV")
    a.add_argument("--bound", choices=ACCOUNT_BOUNDS, required=True)
    _mech_flags(a)
    g = a.add_mutually_exclusive_group()
    g.add_argument("--alpha-grid", dest="alpha_grid")
    g.add_argument("--eps-grid", dest="eps_grid")
    a.add_argument("--compositions", type=int, default=1)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_account)

    c = sub.add_parser("calibrate", help="smallest sigma for an (eps, delta) target")
    c.add_argument("--eps", type=float, required=True)
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--bound", choices=sorted(CALIBRATE_BOUNDS), default="hs")
    _mech_flags(c, sigma_required=False)
    c.set_defaults(func=cmd_calibrate)

    t = sub.add_parser("train", help="private training from a CSV file")
    t.add_argument("--data", required=True)
    t.add_argument("--label-column", dest="label_column", default="label")
    t.add_argument("--categorical", default="", help="comma-separated column names")
    t.add_argument("--label-range", dest="label_range", help="lo:hi for regression labels")
    t.add_argument("--task", choices=("logistic", "linear"), required=True)
    t.add_argument("--eps", type=float, required=True)
    t.add_argument("--delta", type=float, required=True)
    t.add_argument("--lambda", dest="lam", type=float, required=True)
    t.add_argument("--clip", type=float, default=1.0)
    t.add_argument("--tau", type=float, required=True)
    t.add_argument("--sigma-out", dest="sigma_out", type=float, required=True)
    t.add_argument("--optimizer", choices=solver.OPTIMIZERS, default="agd")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--normalize", choices=data.NORMALIZE_MODES, default="unit_ball")
    t.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.2)
    t.add_argument("--max-iters", dest="max_iters", type=int, default=None,
                   help="iteration cap (epochs for sag); default from the numeric config")
    t.add_argument("--model-out", dest="model_out", default="model.json")
    t.add_argument("--report-out", dest="report_out", default="report.json")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("risk-bound", help="excess-risk and iteration bounds")
    for name, val in RISK_DEFAULTS.items():
        flag = "--lambda" if name == "lam" else "--" + name.replace("_", "-")
        typ = int if name in ("n", "d") else float
        r.add_argument(flag, dest=name, type=typ, default=val)
    r.add_argument("--gamma", type=float, default=None, help="target gradient norm (default tau)")
    r.add_argument("--r0", type=float, default=None, help="|theta0 - theta*| (default theta-star-norm)")
    r.set_defaults(func=cmd_risk_bound)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"objpert: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except CalibrationError as exc:
        print(f"objpert: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergenceError as exc:
        print(f"objpert: no release: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (OSError, ValueError) as exc:
        print(f"objpert: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
