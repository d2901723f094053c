"""Command line front end.

Subcommands: ``eigen`` (open-loop spectra and tail constants), ``certify``
(decay certificate search), ``simulate`` (modal simulation with optional
certificate validation) and ``reproduce`` (end-to-end run of a bundled
scenario).  Exit codes: 0 success, 1 infeasible, 2 configuration error,
3 certificate or envelope failure, 4 diverging trajectory.
"""
from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .certifier import Certificate, max_decay, search_certificate, verify
from .config import ScenarioConfig, build_basis, build_plant, load_scenario
from .errors import BracketingError, ConfigError, DivergenceError, TailBoundError
from .reduction import assemble
from .simulator import envelope_report, simulate, write_csv, write_sidecar
from .spectral import tail_m1, tail_m2

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_CONFIG = 2
EXIT_ENVELOPE = 3
EXIT_DIVERGED = 4


def _load(path) -> ScenarioConfig:
    if not Path(path).exists():
        raise ConfigError(f"scenario file not found: {path}")
    return load_scenario(path)


def _fmt(v: float) -> str:
    return f"{v:+.4g}"


def cmd_eigen(args) -> int:
    cfg = _load(args.config)
    plant = build_plant(cfg)
    basis = build_basis(plant, args.n, method=args.basis)
    lams = basis.eigenvalues
    zeta = plant.zeta_m
    print(f"open-loop spectra: {cfg.name}")
    print(f"  shifted potential uses q_c = {plant.q_c:.4g}")
    print(f"  {'i':>3} {'lambda_i':>12} {'rate q_c-lambda_i':>18} {'phi_i(zeta)':>12} {'dphi_i(zeta)':>13}")
    for i in range(1, args.n + 1):
        pr = basis.pairs[i - 1]
        print(
            f"  {i:>3} {lams[i-1]:>12.6g} {plant.q_c - lams[i-1]:>18.6g} "
            f"{pr.phi(np.array([zeta]))[0]:>12.6g} {pr.dphi(np.array([zeta]))[0]:>13.6g}"
        )
    ode_eigs = plant.ode.eigenvalues()
    pretty = ", ".join(f"{v.real:+.4g}{v.imag:+.4g}j" if abs(v.imag) > 1e-12 else f"{v.real:+.4g}" for v in ode_eigs)
    print(f"  LTI block eigenvalues: {pretty}")
    if plant.trace_kind == "value":
        bound = tail_m1(basis, args.n, zeta=zeta)
        print(f"  value-trace tail constant at N = {args.n}: {bound:.6g}")
    else:
        eps = args.epsilon if args.epsilon is not None else cfg.epsilon
        if eps is None:
            raise ConfigError("derivative trace needs epsilon (config certify.epsilon or --epsilon)")
        bound = tail_m2(basis, args.n, eps, zeta=zeta)
        print(f"  derivative-trace tail constant at N = {args.n} (epsilon = {eps:.4g}): {bound:.6g}")
    return EXIT_OK


def _resolve_target(cfg: ScenarioConfig, args) -> tuple[int, float]:
    if args.n is not None:
        eta = args.eta
        if eta is None:
            eta = next((e for (n, e) in cfg.targets if n == args.n), 0.0)
        return args.n, float(eta)
    if not cfg.targets:
        raise ConfigError("no certification target: give --n or a certify.targets entry")
    n, eta = cfg.targets[0]
    if args.eta is not None:
        eta = args.eta
    return n, float(eta)


def cmd_certify(args) -> int:
    cfg = _load(args.config)
    plant = build_plant(cfg)
    n, eta = _resolve_target(cfg, args)
    epsilon = args.epsilon if args.epsilon is not None else cfg.epsilon
    basis = build_basis(plant, n + 1, method=args.basis)
    model = assemble(plant, basis, n)
    kw = dict(epsilon=epsilon, alpha_grid=cfg.alpha_grid, beta_grid=cfg.beta_grid)
    if args.max_decay:
        found = max_decay(model, **kw)
        if found is None:
            print(f"infeasible: no certificate at eta = 0 with N = {n}")
            return EXIT_INFEASIBLE
        eta_star, cert = found
        print(f"largest certified decay rate with N = {n}: eta = {eta_star:.4g}")
    else:
        cert = search_certificate(model, eta, **kw)
        if cert is None:
            print(f"infeasible: no certificate at eta = {eta:.4g} with N = {n}")
            return EXIT_INFEASIBLE
    print(
        f"certificate: N = {cert.n}, eta = {cert.eta:.4g}, "
        f"alpha = {cert.alpha:.4g}, beta = {cert.beta:.4g}"
    )
    for key, val in cert.margins.items():
        print(f"  margin {key}: {val:.3e}")
    if args.out:
        cert.save(args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args.config)
    plant = build_plant(cfg)
    sim = cfg.sim
    if args.t_end is not None:
        sim.t_end = float(args.t_end)
    if args.n_sim is not None:
        sim.n_sim = int(args.n_sim)
    if args.method is not None:
        sim.method = args.method
    if cfg.w0 is None and cfg.z0 is None:
        raise ConfigError("simulate.w0 or simulate.z0: an initial profile is required")

    cert = None
    if args.certificate:
        if not Path(args.certificate).exists():
            raise ConfigError(f"certificate file not found: {args.certificate}")
        try:
            cert = Certificate.load(args.certificate)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{args.certificate}: {exc}") from exc
        if cert.n + 1 > sim.n_sim:
            raise ConfigError("certificate retains too many modes for n_sim")

    basis = build_basis(plant, max(sim.n_sim, (cert.n + 1) if cert else 0), method=args.basis)
    if cert is not None:
        model = assemble(plant, basis, cert.n)
        report = verify(cert, model)
        if not report.ok:
            print(f"certificate failed verification: {report.reason}")
            for key, val in report.margins.items():
                print(f"  margin {key}: {val:.3e}")
            return EXIT_ENVELOPE
        print("certificate verified against the scenario model")

    traj = simulate(plant, basis, sim, w0=cfg.w0, z0=cfg.z0, x0=cfg.x0)
    out = args.out or f"{cfg.name}_trajectory.csv"
    write_csv(traj, out, cert=cert)
    side = write_sidecar(out, traj, scenario=cfg.to_dict(), cert=cert)
    print(f"wrote {out} and {side}")

    if cert is not None:
        rep = envelope_report(traj, cert)
        print(
            f"envelope: max ratio {rep.max_ratio:.6g} (tol 1e-06), "
            f"fitted rate {rep.fitted_rate:.4g} vs required {rep.required_rate:.4g}"
        )
        if not rep.ok:
            print("envelope check FAILED")
            return EXIT_ENVELOPE
        print("envelope check passed")
    return EXIT_OK


def bundled_scenario_path(name: str):
    """Filesystem path of a scenario shipped with the package."""
    ref = resources.files("rdstab") / "scenarios" / f"{name}.yaml"
    if not ref.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return ref


def cmd_reproduce(args) -> int:
    with resources.as_file(bundled_scenario_path(args.name)) as path:
        cfg = load_scenario(path)
    plant = build_plant(cfg)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    n_max = max(cfg.sim.n_sim, max(n for n, _ in cfg.targets) + 1)
    basis = build_basis(plant, n_max)

    print(f"scenario: {cfg.name}")
    lam1 = basis.eigenvalues[0]
    print(f"  open-loop PDE dominant rate q_c - lambda_1 = {_fmt(plant.q_c - lam1)}")
    ode_eigs = plant.ode.eigenvalues()
    unstable = [v for v in ode_eigs if v.real > 0]
    pretty = ", ".join(
        f"{v.real:+.4g}{v.imag:+.4g}j" if abs(v.imag) > 1e-12 else f"{v.real:+.4g}" for v in unstable
    )
    print(f"  unstable LTI eigenvalues: {pretty or 'none'}")

    cert = None
    for n, eta in cfg.targets:
        model = assemble(plant, basis, n)
        found = search_certificate(
            model, eta, epsilon=cfg.epsilon,
            alpha_grid=cfg.alpha_grid, beta_grid=cfg.beta_grid,
        )
        if found is None:
            print(f"  target N = {n}, eta = {eta:.4g}: INFEASIBLE")
            return EXIT_INFEASIBLE
        worst = min(found.margins.values())
        print(
            f"  target N = {n}, eta = {eta:.4g}: feasible, "
            f"alpha = {found.alpha:.4g}, beta = {found.beta:.4g}, min margin = {worst:.3e}"
        )
        cert_path = outdir / f"{cfg.name}_certificate_n{n}.json"
        found.save(cert_path)
        cert = found

    traj = simulate(plant, basis, cfg.sim, w0=cfg.w0, z0=cfg.z0, x0=cfg.x0)
    csv_path = outdir / f"{cfg.name}_trajectory.csv"
    write_csv(traj, csv_path, cert=cert)
    write_sidecar(csv_path, traj, scenario=cfg.to_dict(), cert=cert)
    rep = envelope_report(traj, cert)
    print(
        f"  simulation: envelope max ratio {rep.max_ratio:.6g}, "
        f"fitted decay rate {rep.fitted_rate:.4g} (required {rep.required_rate:.4g})"
    )
    print(f"  wrote certificates and trajectory under {outdir}")
    if not rep.ok:
        print("  envelope check FAILED")
        return EXIT_ENVELOPE
    print("  envelope check passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdstab",
        description="decay certificates and simulation for boundary-coupled diffusion loops",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("eigen", help="print open-loop spectra and tail constants")
    pe.add_argument("config")
    pe.add_argument("--n", type=int, default=4, help="number of modes to print")
    pe.add_argument("--epsilon", type=float, default=None)
    pe.add_argument("--basis", default="auto",
                    choices=["auto", "closed-form", "robin", "discretized"])
    pe.set_defaults(func=cmd_eigen)

    pc = sub.add_parser("certify", help="search for a decay certificate")
    pc.add_argument("config")
    pc.add_argument("--n", type=int, default=None, help="retained modes (default: first target)")
    pc.add_argument("--eta", type=float, default=None, help="decay rate to certify")
    pc.add_argument("--epsilon", type=float, default=None)
    pc.add_argument("--max-decay", action="store_true", help="bisect for the largest rate")
    pc.add_argument("--out", default=None, help="write the certificate JSON here")
    pc.add_argument("--basis", default="auto",
                    choices=["auto", "closed-form", "robin", "discretized"])
    pc.set_defaults(func=cmd_certify)

    ps = sub.add_parser("simulate", help="integrate the modal system and export CSV")
    ps.add_argument("config")
    ps.add_argument("--certificate", default=None, help="certificate JSON to validate against")
    ps.add_argument("--out", default=None, help="CSV output path")
    ps.add_argument("--t-end", type=float, default=None)
    ps.add_argument("--n-sim", type=int, default=None)
    ps.add_argument("--method", default=None, choices=["splitting", "trapezoid"])
    ps.add_argument("--basis", default="auto",
                    choices=["auto", "closed-form", "robin", "discretized"])
    ps.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("reproduce", help="run a bundled scenario end to end")
    pr.add_argument("name", choices=["dirichlet", "neumann"])
    pr.add_argument("--outdir", default=".")
    pr.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BracketingError, TailBoundError) as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
