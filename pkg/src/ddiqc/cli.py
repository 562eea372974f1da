"""Command-line interface: ``ddiqc <command> [options]``.

Every command prints one JSON report on standard output. Exit codes:
0 success (a refuted IQC is a successful analysis), 1 input/usage error,
2 violated premise or degenerate data, 3 internal inconsistency.
"""
import argparse
import sys
import time

import numpy as np

from . import __version__, horizon, io, optim
from .errors import (ArgumentError, ConsistencyError, DimensionError, NumericError, ParseError,
                     PremiseError)
from .iqc import (NOISE_KINDS, PSD_TOL, MultiplierFactorization, NoiseModel, NoiseRelaxation,
                  add_measurement_noise, build_data_matrices, verify_l_iqc, verify_l_iqc_noisy)
from .linalg import block_toeplitz, max_singular_value
from .lti import (BasisFilterSpec, StateSpaceModel, Trajectory, hinf_norm_grid, impulse_response,
                  random_stable_system, simulate)
from .testsystems import seven_pole_plant

EXIT_OK, EXIT_IO, EXIT_PREMISE, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_data(p, need_in=True):
    p.add_argument("--in", dest="inp", required=need_in, help="trajectory CSV")
    p.add_argument("--L", type=int, required=need_in, help="Hankel depth")
    p.add_argument("--nu", type=int, default=None,
                   help="zero-prefix length (default: --n-hat if given, else required)")
    p.add_argument("--n-hat", type=int, default=None, help="upper bound on the system order")
    p.add_argument("--psd-tol", type=float, default=PSD_TOL)


def _add_tol(p, default=1e-6):
    p.add_argument("--tol", type=float, default=default, help="bisection tolerance")


def _add_noise(p, levels=False):
    p.add_argument("--noise-kind", choices=NOISE_KINDS, default="multiplicative-uniform")
    if levels:
        p.add_argument("--noise-level", type=_floats, default=[0.0, 0.1, 0.2, 0.3],
                       help="comma-separated noise levels")
    else:
        p.add_argument("--noise-level", type=float, default=0.0)
    p.add_argument("--noise-samples", type=int, default=10, help="noise instances K")
    p.add_argument("--seed", type=int, default=0)


def _add_basis(p):
    p.add_argument("--basis-kind", choices=("pole-chain", "distinct-poles"), default="pole-chain")
    p.add_argument("--basis-lambda", type=float, default=0.0, help="pole-chain parameter lambda")
    p.add_argument("--basis-order", type=int, default=0, help="pole-chain order b")
    p.add_argument("--basis-poles", type=_floats, default=None,
                   help="distinct-poles parameters, basis 1, (z+l1)^-1, ...")
    p.add_argument("--opt-tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=500)


def build_parser():
    ap = _Parser(prog="ddiqc", description="Input-output properties of LTI systems from data.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="simulate a model with a seeded uniform input")
    p.add_argument("--model", help="model JSON (default: seeded random system)")
    p.add_argument("--system", choices=("random", "seven-pole"), default="random")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--rho", type=float, default=0.9, help="spectral radius of random systems")
    p.add_argument("--L", type=int, default=None, help="depth the data must excite")
    p.add_argument("--N", type=int, default=None, help="samples (default from L and order)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-kind", choices=NOISE_KINDS, default="multiplicative-uniform")
    p.add_argument("--noise-level", type=float, default=0.0)
    p.add_argument("--out", required=True, help="trajectory CSV to write")
    p.add_argument("--model-out", default=None, help="also write the model JSON")

    p = sub.add_parser("verify", help="data-based L-IQC test")
    _add_data(p)
    p.add_argument("--multiplier", choices=("gain", "input-passivity", "output-passivity",
                                            "cone", "filtered-gain"), default="gain")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--cone-center", type=_floats, default=None, help="row-major p x m center")
    p.add_argument("--basis-lambda", type=float, default=0.0)
    p.add_argument("--basis-order", type=int, default=1)
    _add_noise(p)

    p = sub.add_parser("gain", help="L2-gain estimate")
    _add_data(p)
    _add_tol(p)
    p.add_argument("--model", default=None, help="model JSON for oracle comparison")

    p = sub.add_parser("passivity", help="passivity index estimate")
    _add_data(p)
    _add_tol(p)
    p.add_argument("--rho-kind", choices=("input", "output"), default="input")

    p = sub.add_parser("cone", help="tightest conic relation")
    _add_data(p)
    p.add_argument("--opt-tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=500)

    p = sub.add_parser("optimal-iqc", help="optimal positive-negative multiplier, orders 0..b")
    _add_data(p)
    _add_basis(p)

    p = sub.add_parser("approx", help="certified low-order approximation")
    _add_data(p)
    _add_basis(p)
    p.add_argument("--out", default=None, help="write the approximant as model JSON")

    p = sub.add_parser("noise-study", help="noise-relaxed estimates over noise levels")
    _add_data(p)
    _add_tol(p)
    _add_noise(p, levels=True)
    p.add_argument("--property", choices=("gain", "input-passivity", "output-passivity"),
                   default="gain")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="plot CSV of (level, estimate, delta)")
    p.add_argument("--svg", default=None)

    p = sub.add_parser("horizon-curve", help="finite-section norms of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--horizons", type=_ints, default=[4, 8, 16, 32, 64, 128, 256, 512])
    p.add_argument("--out", default=None, help="plot CSV of (L, sigma)")
    p.add_argument("--svg", default=None)

    p = sub.add_parser("fir-bound", help="infinite-horizon gain certificate for FIR systems")
    p.add_argument("--gamma", type=float, default=None, help="finite-horizon gain (else from data)")
    p.add_argument("--in", dest="inp", default=None)
    p.add_argument("--L", type=int, required=True,
                   help="gain horizon with --gamma; Hankel depth with --in")
    p.add_argument("--nu", type=int, default=None)
    p.add_argument("--n-hat", type=int, default=None)
    p.add_argument("--psd-tol", type=float, default=PSD_TOL)
    p.add_argument("--fir-length", type=int, required=True)
    p.add_argument("--model", default=None, help="model JSON for the determinant check")
    _add_tol(p)
    return ap


# -- helpers --------------------------------------------------------------------

def _nu(args):
    if args.nu is not None:
        return args.nu
    if getattr(args, "n_hat", None) is not None:
        return args.n_hat
    raise ArgumentError("--nu is required when --n-hat is not given")


def _load_data(args, traj=None):
    traj = traj if traj is not None else io.load_trajectory_csv(args.inp)
    data = build_data_matrices(traj, args.L, _nu(args))
    return traj, data


def _data_diag(data):
    s = np.linalg.svd(data.HwV, compute_uv=False)
    return {"m": data.m, "p": data.p, "N": data.N, "L": data.L, "nu": data.nu,
            "horizon": data.horizon, "dim": data.dim, "pe_order": data.pe_order,
            "persistently_exciting": data.persistently_exciting,
            "excitation_margin": data.excitation_margin,
            "smallest_retained_singular_value": float(s[-1]) if s.size else None}


def _basis(args):
    if args.basis_kind == "distinct-poles" or args.basis_poles is not None:
        return BasisFilterSpec.distinct_poles(args.basis_poles or [])
    return BasisFilterSpec.pole_chain(args.basis_lambda, args.basis_order)


def _basis_echo(basis):
    return {"kind": basis.kind, "terms": [list(t) for t in basis.terms]}


def _opts(args):
    return optim.OptimOptions(opt_tol=args.opt_tol, max_iter=args.max_iter)


def _result_dict(res):
    return {"gamma": res.gamma, "gamma_sq": res.gamma_sq, "c21": res.c21,
            "c22": res.c22, "iterations": res.iterations,
            "feasibility_residual": res.feasibility_residual, "converged": res.converged,
            "ill_conditioned": res.ill_conditioned}


# -- commands -------------------------------------------------------------------

def cmd_gen_data(args):
    if args.model:
        model = io.load_model_json(args.model)
        source = {"model": args.model}
    elif args.system == "seven-pole":
        model = seven_pole_plant()
        source = {"system": "seven-pole"}
    else:
        model = random_stable_system(args.n, args.m, args.p, args.seed, args.rho)
        source = {"system": "random", "n": args.n, "m": args.m, "p": args.p, "rho": args.rho}
    if args.N is not None:
        N = args.N
    elif args.L is not None:
        N = (model.m + 1) * (args.L + model.n) - 1 + 10
    else:
        raise ArgumentError("gen-data needs --N or --L")
    if N < 1:
        raise ArgumentError(f"sample count must be positive, got {N}")
    rng = np.random.default_rng(args.seed)
    u = rng.uniform(-1.0, 1.0, size=(N, model.m))
    traj = Trajectory(u, simulate(model, u))
    if args.noise_level > 0:
        noise = NoiseModel(args.noise_kind, args.noise_level, 1, args.seed)
        traj = add_measurement_noise(traj, noise, args.seed + 1)
    io.save_trajectory_csv(args.out, traj)
    if args.model_out:
        io.save_model_json(args.model_out, model)
    config = {**source, "N": N, "L": args.L, "seed": args.seed, "noise_kind": args.noise_kind,
              "noise_level": args.noise_level, "out": args.out, "model_out": args.model_out}
    return config, {}, {"N": N, "order": model.n, "m": model.m, "p": model.p,
                        "stable": model.stable(), "minimal": model.minimal()}


def _multiplier(args, m, p):
    kind = args.multiplier
    if kind == "gain":
        return MultiplierFactorization.gain(m, p, args.gamma)
    if kind == "input-passivity":
        return MultiplierFactorization.input_passivity(m, args.rho)
    if kind == "output-passivity":
        return MultiplierFactorization.output_passivity(m, args.rho)
    if kind == "cone":
        C = np.zeros((p, m)) if args.cone_center is None else np.array(args.cone_center)
        if C.size != p * m:
            raise DimensionError(f"--cone-center needs {p * m} entries, got {C.size}")
        return MultiplierFactorization.cone(C.reshape(p, m), args.gamma)
    return MultiplierFactorization.filtered_gain(m, p, args.gamma, args.basis_lambda,
                                                 args.basis_order)


def cmd_verify(args):
    traj, data = _load_data(args)
    mult = _multiplier(args, data.m, data.p)
    delta = None
    if args.noise_level > 0:
        noise = NoiseModel(args.noise_kind, args.noise_level, args.noise_samples, args.seed)
        delta = NoiseRelaxation(data, mult.psi, noise).delta(mult.M)
        rep = verify_l_iqc_noisy(data, mult, delta, args.psd_tol)
    else:
        rep = verify_l_iqc(data, mult, args.psd_tol)
    config = {"in": args.inp, "L": args.L, "nu": data.nu, "multiplier": args.multiplier,
              "gamma": args.gamma, "rho": args.rho, "cone_center": args.cone_center,
              "basis_lambda": args.basis_lambda, "basis_order": args.basis_order,
              "noise_kind": args.noise_kind, "noise_level": args.noise_level,
              "noise_samples": args.noise_samples, "seed": args.seed, "psd_tol": args.psd_tol}
    payload = {"decision": rep.decision, "min_eigenvalue": rep.min_eigenvalue,
               "threshold": rep.threshold, "abs_tol": rep.abs_tol, "delta": delta}
    return config, _data_diag(data), payload


def cmd_gain(args):
    traj, data = _load_data(args)
    gamma = optim.l2_gain_estimate(data, args.tol, args.psd_tol)
    payload = {"gamma": gamma, "oracle_finite_horizon": None, "oracle_hinf": None}
    if args.model:
        model = io.load_model_json(args.model)
        h = data.horizon
        payload["oracle_finite_horizon"] = max_singular_value(
            block_toeplitz(impulse_response(model, h), h).matrix)
        payload["oracle_hinf"] = hinf_norm_grid(model) if model.stable() else None
    config = {"in": args.inp, "L": args.L, "nu": data.nu, "tol": args.tol,
              "psd_tol": args.psd_tol, "model": args.model}
    return config, _data_diag(data), payload


def cmd_passivity(args):
    traj, data = _load_data(args)
    rho = optim.passivity_index_estimate(data, args.rho_kind, args.tol, args.psd_tol)
    config = {"in": args.inp, "L": args.L, "nu": data.nu, "tol": args.tol,
              "psd_tol": args.psd_tol, "rho_kind": args.rho_kind}
    return config, _data_diag(data), {"rho": rho, "kind": args.rho_kind}


def cmd_cone(args):
    traj, data = _load_data(args)
    res = optim.optimal_pn_iqc(data, optim.cone_class(), _opts(args))
    config = {"in": args.inp, "L": args.L, "nu": data.nu, "opt_tol": args.opt_tol,
              "max_iter": args.max_iter}
    payload = {"C": -res.c21[0], "gamma": res.gamma, "iterations": res.iterations,
               "feasibility_residual": res.feasibility_residual, "converged": res.converged,
               "ill_conditioned": res.ill_conditioned}
    return config, _data_diag(data), payload


def _basis_config(args, data):
    return {"in": args.inp, "L": args.L, "nu": data.nu, "basis_kind": args.basis_kind,
            "basis_lambda": args.basis_lambda, "basis_order": args.basis_order,
            "basis_poles": args.basis_poles, "opt_tol": args.opt_tol, "max_iter": args.max_iter}


def cmd_optimal_iqc(args):
    traj, data = _load_data(args)
    if args.basis_poles is not None or args.basis_kind == "distinct-poles":
        basis = _basis(args)
        res = optim.optimal_pn_iqc(data, optim.PnMultiplierClass(psi21=basis), _opts(args))
        payload = {"basis": _basis_echo(basis), **_result_dict(res)}
    else:
        sweep = optim.basis_order_sweep(data, args.basis_lambda, range(args.basis_order + 1),
                                        _opts(args))
        payload = {"orders": [b for b, _ in sweep],
                   "gamma_sq": [r.gamma_sq for _, r in sweep],
                   "converged": [r.converged for _, r in sweep],
                   "feasibility_residual": [r.feasibility_residual for _, r in sweep],
                   "best": _result_dict(sweep[-1][1])}
    return _basis_config(args, data), _data_diag(data), payload


def cmd_approx(args):
    traj, data = _load_data(args)
    basis = _basis(args)
    model, res = optim.loworder_fit(data, basis, _opts(args))
    if args.out:
        io.save_model_json(args.out, model)
    payload = {"gamma": res.gamma, "basis": _basis_echo(basis), "coefficients": -res.c21,
               "iterations": res.iterations, "feasibility_residual": res.feasibility_residual,
               "converged": res.converged, "model": io.model_to_dict(model)}
    config = {**_basis_config(args, data), "out": args.out}
    return config, _data_diag(data), payload


def _estimate(data, prop, relax, tol, psd_tol):
    if prop == "gain":
        fam = optim.gain_family(data, relax, psd_tol)
        val = optim.bisect_gain(fam, tol)
        return val, fam.delta(val ** 2)
    fam = optim.passivity_family(data, prop.split("-")[0], relax, psd_tol)
    val = optim.bisect_passivity(fam, tol)
    return val, fam.delta(val)


def cmd_noise_study(args):
    clean = io.load_trajectory_csv(args.inp)
    nu = _nu(args)
    levels, values, deltas = [], [], []
    q = clean.m
    psi_dim = clean.m + clean.p
    for i, level in enumerate(args.noise_level):
        if level > 0:
            noise = NoiseModel(args.noise_kind, level, args.noise_samples, args.seed)
            traj = add_measurement_noise(clean, noise, args.seed + 7919 * (i + 1))
            data = build_data_matrices(traj, args.L, nu)
            relax = NoiseRelaxation(data, StateSpaceModel.static(np.eye(psi_dim if
                                    args.property == "gain" else 2 * q)), noise, args.workers)
        else:
            data = build_data_matrices(clean, args.L, nu)
            relax = None
        val, delta = _estimate(data, args.property, relax, args.tol, args.psd_tol)
        levels.append(float(level))
        values.append(val)
        deltas.append(delta)
    if args.out:
        io.write_pairs_csv(args.out, ["level", "estimate", "delta"], [levels, values, deltas])
    if args.svg:
        io.svg_line_chart(args.svg, levels, {args.property: values}, "noise level",
                          args.property)
    config = {"in": args.inp, "L": args.L, "nu": nu, "tol": args.tol, "psd_tol": args.psd_tol,
              "property": args.property, "noise_kind": args.noise_kind,
              "noise_level": args.noise_level, "noise_samples": args.noise_samples,
              "seed": args.seed, "out": args.out, "svg": args.svg}
    payload = {"levels": levels, "estimates": values, "deltas": deltas}
    return config, {}, payload


def cmd_horizon_curve(args):
    model = io.load_model_json(args.model)
    curve, fit = horizon.convergence_diagnostic(model, args.horizons)
    Ls = [L for L, _ in curve]
    sig = [s for _, s in curve]
    if args.out:
        io.write_pairs_csv(args.out, ["L", "sigma"], [Ls, sig])
    if args.svg:
        io.svg_line_chart(args.svg, Ls, {"sigma_max(T_L)": sig, "hinf": [fit.hinf] * len(Ls)},
                          "L", "norm")
    config = {"model": args.model, "horizons": args.horizons, "out": args.out, "svg": args.svg}
    payload = {"horizons": Ls, "sigma": sig, "hinf": fit.hinf, "gap_slope": fit.slope,
               "final_gap": fit.final_gap,
               "note": "slope is an empirical rate diagnostic, not a bound"}
    return config, {}, payload


def cmd_fir_bound(args):
    diag = {}
    if args.gamma is not None:
        gamma_L, L = args.gamma, args.L
    elif args.inp:
        traj, data = _load_data(args)
        gamma_L, L = optim.l2_gain_estimate(data, args.tol, args.psd_tol), data.horizon
        diag = _data_diag(data)
    else:
        raise ArgumentError("fir-bound needs --gamma or --in")
    model = io.load_model_json(args.model) if args.model else None
    cert = horizon.fir_infinite_gain_bound(gamma_L, L, args.fir_length, model)
    config = {"gamma": args.gamma, "in": args.inp, "L": args.L, "nu": args.nu,
              "fir_length": args.fir_length, "model": args.model, "tol": args.tol}
    return config, diag, cert.as_dict()


COMMANDS = {
    "gen-data": cmd_gen_data, "verify": cmd_verify, "gain": cmd_gain,
    "passivity": cmd_passivity, "cone": cmd_cone, "optimal-iqc": cmd_optimal_iqc,
    "approx": cmd_approx, "noise-study": cmd_noise_study, "horizon-curve": cmd_horizon_curve,
    "fir-bound": cmd_fir_bound,
}


def run_command(argv, stdout=None, stderr=None):
    """Run one command; returns ``(exit_code, ReportDocument or None)``."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=stderr)
        return EXIT_IO, None
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0), None
    t0 = time.perf_counter()
    try:
        config, diag, payload = COMMANDS[args.command](args)
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_IO, None
    except (PremiseError, ArgumentError, DimensionError, NumericError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_PREMISE, None
    except ConsistencyError as exc:
        print(f"internal error: {exc}", file=stderr)
        return EXIT_INTERNAL, None
    doc = io.ReportDocument(command=args.command, argv=argv, config=config, diagnostics=diag,
                            payload=payload, timing=time.perf_counter() - t0, version=__version__)
    print(io.report_json(doc), file=stdout)
    return EXIT_OK, doc


def main(argv=None):
    code, _ = run_command(sys.argv[1:] if argv is None else argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
