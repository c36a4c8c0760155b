"""Command-line pipeline: train, certify, check, export-grid, oracle-value.

Exit codes: 0 success or certified, 1 refuted or bound violation, 2 budget
exhausted, 3 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import BUNDLED, RunConfig, load_run_config
from .errors import OracleError, RescertError
from .expr import eval_points
from .net import ValueNet, init_net, load_net_file, net_to_dict, save_net, to_expr
from .oracle import (check_decrease, check_value_bounds, check_closed_loop, policy_cost,
                     riccati_solve, true_value)
from .residual import build_residual
from .system import HJB, LYAPUNOV, linearize, weight_hessian_at_origin
from .trainer import make_collocation, train_hjb, train_lyapunov
from .verifier import (BUDGET_EXHAUSTED, CERTIFIED, REFUTED,
                       certify_quadratic_bound, max_separated_level, min_certified_epsilon,
                       verify_local_pd, verify_one_sided, verify_relative_residual,
                       verify_sublevel_separation)

EXIT_OK = 0
EXIT_REFUTED = 1
EXIT_BUDGET = 2
EXIT_USAGE = 3

CERT_FORMAT = "rescert-certificate"


class UsageError(Exception):
    pass


def _exit_code(status: str) -> int:
    return {CERTIFIED: EXIT_OK, REFUTED: EXIT_REFUTED, BUDGET_EXHAUSTED: EXIT_BUDGET}[status]


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _net_digest(net: ValueNet) -> str:
    doc = net_to_dict(net)
    doc.pop("metadata")
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out) if args.out else cfg.output_dir


def _load_net(path: str, cfg: RunConfig) -> ValueNet:
    net, _ = load_net_file(path)
    if net.n != cfg.system.n:
        raise UsageError(f"network dimension {net.n} does not match the system ({cfg.system.n})")
    return net


def _say(msg: str) -> None:
    print(msg, flush=True)


# -- train ----------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    sysm = cfg.system
    net0 = init_net(sysm.n, cfg.net["width"], cfg.net["seed"], cfg.net["scale"])
    col = cfg.collocation
    pts = make_collocation(sysm.domain, col["count"], col["kind"], col["seed"])
    tr = cfg.trainer
    start = time.perf_counter()
    if sysm.mode == LYAPUNOV:
        net, report = train_lyapunov(sysm, net0, pts, tr["ridge"], ridge_rel=tr["ridge_rel"],
                                     weighting=tr["weighting"])
    else:
        net, report = train_hjb(sysm, net0, pts, tr["max_iters"], tr["tol"], tr["ridge"],
                                ridge_rel=tr["ridge_rel"], weighting=tr["weighting"],
                                initial_policy=tr["initial_policy"])
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"config_hash": cfg.hash, "config": cfg.name, "collocation": pts.descriptor()}
    save_net(net, out / "net.json", meta)
    _write_json(out / "train_report.json", {"config_hash": cfg.hash, **report.to_dict(),
                                            "wall_time": time.perf_counter() - start})
    _say(f"trained {sysm.mode} net (m={net.m}) in {report.iterations} iteration(s); "
         f"max relative residual on collocation points "
         f"{report.max_relative_residual[-1]:.3e}")
    _say(f"wrote {out / 'net.json'} and {out / 'train_report.json'}")
    if not report.converged:
        _say("warning: successive approximation did not reach the tolerance")
    return EXIT_OK


# -- certify --------------------------------------------------------------------

def _sublevel_level(args, cfg: RunConfig):
    if args.sublevel is not None:
        if args.sublevel == "auto":
            return "auto"
        try:
            c = float(args.sublevel)
        except ValueError as exc:
            raise UsageError("--sublevel expects a positive number or 'auto'") from exc
        if not c > 0:
            raise UsageError("--sublevel expects a positive number or 'auto'")
        return c
    return cfg.certify["sublevel"]


def cmd_certify(args) -> int:
    cfg = load_run_config(args.config)
    sysm = cfg.system
    net = _load_net(args.net, cfg)
    bnb = cfg.bnb(args.threads)
    cc = cfg.certify
    doc = {"format": CERT_FORMAT, "config_hash": cfg.hash, "net_sha256": _net_digest(net),
           "mode": sysm.mode, "one_sided": bool(args.one_sided), "certificates": {}}
    out = Path(args.output) if args.output else _out_dir(args, cfg) / "certificate.json"

    def finish(status: str, eps_star=None, sublevel_c=None) -> int:
        doc.update(status=status, eps_star=eps_star, sublevel_c=sublevel_c)
        _write_json(out, doc)
        _say(f"status: {status}" + (f", eps_star = {eps_star:.6e}" if eps_star else ""))
        _say(f"wrote {out}")
        return _exit_code(status)

    qb, qcert = certify_quadratic_bound(sysm.weight, cc["alpha"], cc["rho"], sysm.n, bnb)
    doc["certificates"]["quadratic_bound"] = qcert.to_dict()
    _say(f"quadratic lower bound (alpha={cc['alpha']}, rho={cc['rho']}): {qcert.status}")
    if not qcert.certified:
        return finish(qcert.status)

    sublevel = None
    level = _sublevel_level(args, cfg)
    if level is not None:
        if level == "auto":
            c, scert = max_separated_level(net, sysm.domain, bnb)
            if c is None:
                doc["certificates"]["sublevel_separation"] = scert.to_dict() if scert else None
                _say("no separated sublevel level found")
                return finish(scert.status if scert else REFUTED)
        else:
            c = level
            scert = verify_sublevel_separation(net, c, sysm.domain, bnb)
        doc["certificates"]["sublevel_separation"] = scert.to_dict()
        _say(f"sublevel set V <= {c:.6e} separated from the boundary: {scert.status}")
        if not scert.certified:
            return finish(scert.status)
        sublevel = (to_expr(net, fused=True), c)

    if sysm.mode == HJB:
        pd = verify_local_pd(net, cc["rho_pd"], bnb)
        doc["certificates"]["local_pd"] = pd.to_dict()
        _say(f"local positive definiteness on [-{cc['rho_pd']}, {cc['rho_pd']}]^n: {pd.status}")
        if not pd.certified:
            return finish(pd.status, sublevel_c=sublevel[1] if sublevel else None)

    bundle = build_residual(sysm, net)
    c_val = sublevel[1] if sublevel else None
    if args.eps is not None:
        if not 0 <= args.eps < 1:
            raise UsageError("--eps must lie in [0, 1)")
        check = verify_one_sided if args.one_sided else verify_relative_residual
        cert = check(bundle, args.eps, qb, sysm.domain, bnb, sublevel=sublevel)
        eps_star = args.eps if cert.certified else None
    else:
        eps_star, cert = min_certified_epsilon(
            bundle, qb, sysm.domain, bnb, cc["eps_hi"], one_sided=args.one_sided,
            sublevel=sublevel, max_iters=cc["max_iters"], rel_bracket=cc["rel_bracket"])
    doc["certificates"]["residual"] = cert.to_dict()
    return finish(cert.status, eps_star, c_val)


# -- check ----------------------------------------------------------------------

def _grid(domain, per_dim: int) -> np.ndarray:
    lo, hi = domain.as_arrays()
    axes = [np.linspace(lo[0, j], hi[0, j], per_dim) for j in range(domain.n)]
    return np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)


def _load_certificate(path: str, cfg: RunConfig, net: ValueNet) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read certificate {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CERT_FORMAT:
        raise UsageError(f"{path} is not a certificate file")
    if doc.get("net_sha256") != _net_digest(net):
        raise UsageError("the certificate was issued for a different network")
    if doc.get("status") != CERTIFIED or doc.get("eps_star") is None:
        raise UsageError(f"the certificate status is {doc.get('status')!r}; nothing to check")
    if doc.get("mode") != cfg.system.mode:
        raise UsageError("the certificate mode does not match the system")
    return doc


def _riccati_value(sysm):
    A, B = linearize(sysm)
    Qm = 0.5 * weight_hessian_at_origin(sysm)
    Rm = sysm.eval_R(np.zeros((1, sysm.n)))[0]
    P = riccati_solve(A, B, Qm, Rm)
    return lambda X: np.einsum("pi,ij,pj->p", X, P, X)


def cmd_check(args) -> int:
    cfg = load_run_config(args.config)
    sysm = cfg.system
    net = _load_net(args.net, cfg)
    cdoc = _load_certificate(args.cert, cfg, net)
    eps = float(cdoc["eps_star"])
    oc = cfg.oracle
    X = _grid(sysm.domain, args.grid or oc["grid"])
    kw = {"rtol": oc["rtol"], "stop_radius": oc["stop_radius"], "t_max": oc["t_max"]}
    reports = []
    if cdoc.get("one_sided"):
        if sysm.mode != LYAPUNOV:
            raise UsageError("one-sided HJB certificates support no value checks")
        rng = np.random.default_rng(0)
        lo, hi = sysm.domain.as_arrays()
        reports.append(check_decrease(sysm, net, eps, rng.uniform(lo, hi, (oc["samples"],
                                                                          sysm.n))))
    elif sysm.mode == LYAPUNOV:
        reports.append(check_value_bounds(sysm, net, eps, X, **kw))
        rng = np.random.default_rng(0)
        lo, hi = sysm.domain.as_arrays()
        reports.append(check_decrease(sysm, net, eps, rng.uniform(lo, hi, (oc["samples"],
                                                                          sysm.n))))
    else:
        v_star = _riccati_value(sysm) if oc["reference"] == "riccati" else None
        reports.append(check_closed_loop(sysm, net, eps, cdoc.get("sublevel_c"), X,
                                         v_star=v_star, **kw))
    out = Path(args.output) if args.output else _out_dir(args, cfg) / "check_report.json"
    summaries = [r.summary() for r in reports]
    _write_json(out, {"config_hash": cfg.hash, "certificate": str(args.cert),
                      "checks": summaries})
    for r in reports:
        r_path = out.with_name(f"{out.stem}_{r.name}.csv")
        r_path.write_text(r.to_csv())
        s = r.summary()
        _say(f"{r.name}: {'pass' if r.passed else 'FAIL'} ({s['checked']} checked, "
             f"{s['excluded']} excluded, {s['violations']} violations, "
             f"min slack {s['min_slack']})")
        if not r.passed:
            w = r.worst
            _say(f"  worst point {list(w.point)}: V_hat={w.v_hat}, oracle={w.oracle}, "
                 f"bound={w.bound} {w.note}")
    _say(f"wrote {out}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_REFUTED


# -- export-grid ----------------------------------------------------------------

def cmd_export_grid(args) -> int:
    cfg = load_run_config(args.config)
    sysm = cfg.system
    net = _load_net(args.net, cfg)
    if args.resolution < 2:
        raise UsageError("--resolution must be at least 2")
    if args.resolution ** sysm.n > 10_000_000:
        raise UsageError("grid too large")
    eps = None
    if args.cert:
        eps = float(_load_certificate(args.cert, cfg, net)["eps_star"])
    X = _grid(sysm.domain, args.resolution)
    (v,) = eval_points([to_expr(net, fused=True)], X)
    out = Path(args.output) if args.output else _out_dir(args, cfg) / "grid.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        fh.write(f"# config_hash={cfg.hash}\n")
        w = csv.writer(fh)
        header = list(sysm.var_names) + ["v_hat"]
        if eps is not None:
            header.append("error_bound")
        w.writerow(header)
        bound = eps / (1 - eps) * v if eps is not None else None
        for i, x in enumerate(X):
            row = [repr(float(t)) for t in x] + [repr(float(v[i]))]
            if bound is not None:
                row.append(repr(float(bound[i])))
            w.writerow(row)
    _say(f"wrote {len(X)} rows to {out}")
    return EXIT_OK


# -- oracle-value ---------------------------------------------------------------

def _parse_point(text: str, n: int) -> np.ndarray:
    try:
        x = np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"cannot parse point {text!r}") from exc
    if x.shape != (n,):
        raise UsageError(f"point needs {n} comma-separated coordinates")
    return x


def cmd_oracle_value(args) -> int:
    cfg = load_run_config(args.config)
    sysm = cfg.system
    x = _parse_point(args.x, sysm.n)
    if not sysm.domain.contains_point(x):
        raise UsageError("the point lies outside the domain")
    oc = cfg.oracle
    rtol = args.rtol or oc["rtol"]
    if sysm.mode == LYAPUNOV:
        ov = true_value(sysm, x, rtol, oc["stop_radius"], oc["t_max"])
        kind = "V"
    else:
        if not args.net:
            raise UsageError("HJB systems need --net for the closed-loop policy cost")
        ov = policy_cost(sysm, _load_net(args.net, cfg), x, rtol, oc["stop_radius"],
                         oc["t_max"])
        kind = "J"
    print(json.dumps({"config_hash": cfg.hash, "x": x.tolist(), "quantity": kind,
                      "value": ov.value, "tail": ov.tail, "stop_radius": ov.stop_radius,
                      "final_time": ov.final_time}))
    return EXIT_OK


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rescert", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=1,
                   help="verifier worker threads (1 = deterministic single-thread path)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, net=True):
        sp.add_argument("--config", required=True,
                        help=f"run config path or bundled name ({', '.join(BUNDLED)})")
        if net:
            sp.add_argument("--net", required=True, help="network file written by 'train'")
        sp.add_argument("--out", help="output directory (default: output_dir of the config)")

    sp = sub.add_parser("train", help="train the output weights by collocation")
    common(sp, net=False)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("certify", help="certify the smallest relative residual bound")
    common(sp)
    sp.add_argument("--one-sided", action="store_true", help="certify r <= eps * weight only")
    sp.add_argument("--sublevel", help="restrict to {V <= c}: a level c or 'auto'")
    sp.add_argument("--eps", type=float, help="check this eps instead of searching")
    sp.add_argument("--output", help="certificate path (default: <out>/certificate.json)")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("check", help="compare certified bounds with integrated values")
    common(sp)
    sp.add_argument("--cert", required=True, help="certificate written by 'certify'")
    sp.add_argument("--grid", type=int, help="grid points per dimension")
    sp.add_argument("--output", help="report path (default: <out>/check_report.json)")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("export-grid", help="write V_hat and the error bound on a grid as CSV")
    common(sp)
    sp.add_argument("--cert", help="certificate; adds the a-posteriori error bound column")
    sp.add_argument("--resolution", type=int, default=101, help="grid points per dimension")
    sp.add_argument("--output", help="CSV path (default: <out>/grid.csv)")
    sp.set_defaults(func=cmd_export_grid)

    sp = sub.add_parser("oracle-value", help="integrate V(x) or the closed-loop cost J(x)")
    sp.add_argument("--config", required=True)
    sp.add_argument("--x", required=True, help="comma-separated point")
    sp.add_argument("--net", help="network whose induced policy is simulated (HJB)")
    sp.add_argument("--rtol", type=float)
    sp.set_defaults(func=cmd_oracle_value)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except OracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REFUTED
    except (UsageError, RescertError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
