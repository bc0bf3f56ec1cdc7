"""``coagprofile`` command-line entry point.

Exit codes: 0 success, 1 certification failure, 2 usage or configuration
error, 3 numerical failure (including non-convergence).
"""

from __future__ import annotations

import argparse
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import load_profile, save_profile, write_csv, write_json, write_trajectory
from .config import FLAG_KEYS, RunConfig, load_config
from .dynamics import (
    ScaleState,
    SizeDistribution,
    constant_kernel,
    evolve_scale,
    geometric_edges,
    rescaled_compare,
    simulate,
)
from .errors import (
    ConfigError,
    DomainError,
    KernelSpecError,
    NumericalFailure,
    QuadratureError,
    TrivialFixedPointError,
    WeightOverflowError,
)
from .kernel import (
    compute_h_lambda,
    h_lambda_inverse_closed_form,
    h_lambda_inverse_quadrature,
    validate_kernel,
)
from .solver import default_initial_profile, solve_profile
from .verify import verify_profile

EXIT_OK, EXIT_CERT, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("hlambda", "validate-kernel", "solve", "verify", "simulate", "compare")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="sectioned key-value config file")
    common.add_argument("--output", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--grid-min", type=float)
    common.add_argument("--grid-max", type=float)
    common.add_argument("--grid-n", type=int)
    common.add_argument("--damping", type=float)
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iters", type=int)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--seed", type=int, default=0)

    parser = _Parser(prog="coagprofile", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "hlambda": "h_lambda by closed form and by quadrature",
        "validate-kernel": "check the kernel assumptions numerically",
        "solve": "compute the self-similar profile",
        "verify": "certify bounds and residuals of a saved profile",
        "simulate": "run the time-dependent equation",
        "compare": "simulate and measure the distance to a saved profile",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _overrides(ns) -> dict[str, str]:
    out = {}
    for flag, key in FLAG_KEYS.items():
        v = getattr(ns, flag)
        if v is not None:
            out[key] = repr(v)
    return out


def _manifest(ns, cfg: RunConfig, files: list[str], extra: dict | None = None) -> dict:
    m = {
        "command": ns.command,
        "version": __version__,
        "config_file": None if ns.config is None else str(ns.config),
        "effective_config": cfg.effective(),
        "threads": ns.threads,
        "seed": ns.seed,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "outputs": sorted(files),
    }
    m.update(extra or {})
    return m


def _prepare_output(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}", key="--output") from exc
    return path


# --------------------------------------------------------------------------
# sub-commands


def cmd_hlambda(ns, cfg: RunConfig) -> int:
    k = cfg.kernel
    closed = 1.0 / h_lambda_inverse_closed_form(k)
    quad_inv, err = h_lambda_inverse_quadrature(k)
    quad = 1.0 / quad_inv
    rel = abs(quad - closed) / closed
    print(f"lambda               {k.lam:.17g}")
    print(f"h_lambda             {closed:.17g}")
    print(f"closed_form          {closed:.17g}")
    print(f"quadrature           {quad:.17g}")
    print(f"relative_difference  {rel:.3e}")
    out = _prepare_output(ns.output)
    result = {"lambda": k.lam, "closed_form": closed, "quadrature": quad,
              "quadrature_error_estimate": err, "relative_difference": rel}
    write_json(out / "report.json", result)
    write_json(out / "manifest.json", _manifest(ns, cfg, ["report.json"]))
    return EXIT_OK


def cmd_validate_kernel(ns, cfg: RunConfig) -> int:
    res = validate_kernel(cfg.kernel, seed=ns.seed)
    print(f"homogeneity          {'pass' if res.homogeneity else 'FAIL'}"
          f"  (max deviation {res.max_homogeneity_deviation:.3e})")
    print(f"growth_bound         {'pass' if res.growth_bound else 'FAIL'}")
    print(f"nondegeneracy        {'pass' if res.nondegeneracy else 'FAIL'}"
          f"  (observed min {res.observed_min:.6g})")
    for v in res.violations[:10]:
        print(f"  violation {v.assumption}: {v.inequality} at {v.witness} (observed {v.observed:.6g})")
    out = _prepare_output(ns.output)
    write_json(out / "report.json", {
        "passed": res.passed,
        "homogeneity": res.homogeneity,
        "growth_bound": res.growth_bound,
        "nondegeneracy": res.nondegeneracy,
        "observed_min": res.observed_min,
        "max_homogeneity_deviation": res.max_homogeneity_deviation,
        "violations": [vars(v) for v in res.violations],
    })
    write_json(out / "manifest.json", _manifest(ns, cfg, ["report.json"]))
    return EXIT_OK if res.passed else EXIT_CERT


def cmd_solve(ns, cfg: RunConfig) -> int:
    hl = compute_h_lambda(cfg.kernel, method=cfg.h_lambda_method)
    p0 = default_initial_profile(cfg.grid, cfg.kernel, hl)
    t0 = time.perf_counter()
    p, rep = solve_profile(p0, cfg.solver, cfg.quad, threads=ns.threads)
    elapsed = time.perf_counter() - t0
    out = _prepare_output(ns.output)
    save_profile(p, out)
    report = rep.to_dict()
    report["h_lambda"] = {"value": hl.value, "method": hl.method,
                          "estimated_error": hl.estimated_error}
    write_json(out / "report.json", report)
    files = ["profile.csv", "profile.meta.json", "report.json"]
    write_json(out / "manifest.json", _manifest(ns, cfg, files))
    print(f"iterations           {rep.iterations}")
    print(f"final_residual       {rep.final_residual:.6e}")
    print(f"converged            {rep.converged}")
    print(f"gauge_offset         {rep.final_gauge_offset:.10g}")
    print(f"elapsed_s            {elapsed:.2f}")
    if not rep.converged:
        print(f"not converged within {cfg.solver.max_iterations} iterations "
              f"(tolerance {cfg.solver.residual_tol:g})", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _profile_dir(ns, configured: str) -> Path:
    return Path(configured) if configured else ns.output


def cmd_verify(ns, cfg: RunConfig) -> int:
    p = load_profile(_profile_dir(ns, cfg.verify_profile_dir))
    rep = verify_profile(p, cfg.verify, threads=ns.threads)
    out = _prepare_output(ns.output)
    write_json(out / "verify.json", rep.to_dict())
    write_json(out / "manifest.json", _manifest(ns, cfg, ["verify.json"]))
    print(rep.summary())
    return EXIT_OK if rep.certified else EXIT_CERT


def _run_dynamics(ns, cfg: RunConfig):
    d = cfg.dynamics
    kernel = constant_kernel() if d.kernel == "constant" else cfg.kernel
    lam = 0.0 if d.kernel == "constant" else cfg.kernel.lam
    edges = geometric_edges(d.xi_min, d.xi_max, d.cells)
    f0 = SizeDistribution.from_density(edges, lambda x: np.exp(-x))
    times = tuple(t for t in d.output_times if t < d.t_end)
    snaps = simulate(f0, kernel, d.t_end, cfl=d.cfl, output_times=times, threads=ns.threads)
    return f0, snaps, lam


def _scale_states(snaps, lam):
    t_prev, state, out = 0.0, ScaleState(), []
    for f in snaps:
        state = evolve_scale(state, f.time - t_prev, lam)
        t_prev = f.time
        out.append(state)
    return out


def _write_snapshots(path: Path, snaps, states) -> None:
    def rows():
        for f, st in zip(snaps, states):
            for c, v in zip(f.centers, f.cell_values):
                yield (f.time, c, v, c / st.s, st.s**2 * v)

    write_trajectory(path, rows())


def cmd_simulate(ns, cfg: RunConfig) -> int:
    f0, snaps, lam = _run_dynamics(ns, cfg)
    states = _scale_states(snaps, lam)
    out = _prepare_output(ns.output)
    _write_snapshots(out / "trajectory.csv", snaps, states)
    m0 = f0.first_moment()
    drift = [abs(f.first_moment() + f.mass_lost_right - m0) / m0 for f in snaps]
    write_json(out / "manifest.json", _manifest(ns, cfg, ["trajectory.csv"],
                                                {"mass_drift_max": max(drift)}))
    last = snaps[-1]
    print(f"t_end                {last.time:.10g}")
    print(f"first_moment         {last.first_moment():.17g}")
    print(f"mass_lost_right      {last.mass_lost_right:.6e}")
    print(f"mass_drift_max       {max(drift):.3e}")
    return EXIT_OK


def cmd_compare(ns, cfg: RunConfig) -> int:
    p = load_profile(_profile_dir(ns, cfg.dynamics.profile_dir))
    if cfg.dynamics.kernel != "product" or p.kernel != cfg.kernel:
        raise ConfigError("compare needs the product kernel of the saved profile",
                          key="dynamics.kernel")
    _, snaps, lam = _run_dynamics(ns, cfg)
    states = _scale_states(snaps, lam)
    out = _prepare_output(ns.output)
    _write_snapshots(out / "trajectory.csv", snaps, states)
    rows = []
    for f, st in zip(snaps, states):
        c = rescaled_compare(f, st, p, margin=cfg.quad.interior_margin)
        rows.append((f.time, st.s, c.distance, c.shift))
        print(f"t={f.time:<10.6g} s={st.s:<12.8g} distance={c.distance:.6e} shift={c.shift:+.6f}")
    write_csv(out / "distance.csv", ("t", "s", "distance", "shift"), rows)
    write_json(out / "manifest.json", _manifest(ns, cfg, ["trajectory.csv", "distance.csv"]))
    return EXIT_OK


HANDLERS = {
    "hlambda": cmd_hlambda,
    "validate-kernel": cmd_validate_kernel,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if ns.threads < 1:
        print("coagprofile: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(ns.config, _overrides(ns))
        return HANDLERS[ns.command](ns, cfg)
    except (ConfigError, KernelSpecError) as exc:
        key = getattr(exc, "key", None)
        where = f" [{key}]" if key else ""
        print(f"coagprofile: configuration error{where}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, QuadratureError, TrivialFixedPointError,
            WeightOverflowError) as exc:
        print(f"coagprofile: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as exc:
        print(f"coagprofile: domain error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
