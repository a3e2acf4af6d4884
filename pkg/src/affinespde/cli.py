"""Command-line front end: analyze / simulate / verify / eigen.

Exit codes: 0 success, 2 configuration problem, 3 analysis negative (no
certified realization), 4 build or simulation failure, 5 verification
failure.  Output locations resolve as --out, then $AFFINESPDE_OUT/<name>,
then ./affinespde-out/<name>.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import config as cfgmod
from . import funalg, hjmm, levy, operators, oracle, realization as rz
from .errors import (
    AffineSpdeError,
    ConfigError,
    DriftConditionFails,
    MethodUnsupported,
    NotInvariant,
    NotQuasiExponential,
    SigmaEscapesV,
    UnstableConfig,
    UnsupportedOperator,
)
from .funalg import QExpFunction
from .grids import Grid1D
from .operators import EigenExpansion, RayBundle

_CLAUSE_ERRORS = (NotQuasiExponential, NotInvariant, SigmaEscapesV,
                  DriftConditionFails)


def _out_dir(arg_out: str | None, name: str) -> str:
    if arg_out:
        path = arg_out
    elif os.environ.get("AFFINESPDE_OUT"):
        path = os.path.join(os.environ["AFFINESPDE_OUT"], name)
    else:
        path = os.path.join("affinespde-out", name)
    os.makedirs(path, exist_ok=True)
    return path


def _load_runtime(ref: str) -> cfgmod.Runtime:
    path = cfgmod.resolve_config_path(ref)
    raw = cfgmod.load_config(path)
    return cfgmod.build_runtime(raw, base_dir=os.path.dirname(path) or ".")


def _serialize_field(f) -> dict:
    if isinstance(f, QExpFunction):
        return {"qexp": funalg.serialize(f)}
    if isinstance(f, EigenExpansion):
        return {"modal": [[list(np.atleast_1d(i).tolist())
                           if isinstance(i, tuple) else i, c]
                          for i, c in f.items]}
    if isinstance(f, RayBundle):
        return {"rays": [[lbl, funalg.serialize(fn)] for lbl, fn in f.parts]}
    return {"samples": np.asarray(f).tolist()}


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# analyze


def run_analyze(rt: cfgmod.Runtime, out_dir: str) -> int:
    os.makedirs(out_dir, exist_ok=True)
    report: dict = {"scenario": rt.name,
                    "operator": type(rt.op).__name__,
                    "subspace_mode": rt.subspace_mode}
    bases = cfgmod._sigma_bases(rt)
    if bases and all(not isinstance(b, np.ndarray) for b in bases):
        try:
            closure = rz.invariant_span(rt.op, bases, dim_cap=rt.tol.dim_cap,
                                        tol_rank=rt.tol.tol_rank)
            report["volatility_span"] = {
                "status": closure.status,
                "dims_per_iteration": list(closure.dims),
                "dim": closure.basis.dim,
            }
        except AffineSpdeError as exc:
            report["volatility_span"] = {"status": "error", "reason": str(exc)}

    try:
        real = cfgmod.build_scenario_realization(rt)
    except _CLAUSE_ERRORS as exc:
        reason = type(exc).__name__
        report.update(status="negative", reason=reason, detail=str(exc),
                      exit_code=3)
        _write_json(os.path.join(out_dir, "analysis.json"), report)
        print(f"{rt.name}: NEGATIVE ({reason}) {exc}")
        return 3

    report.update(
        status="certified",
        dim_V=real.dim,
        basis=[_serialize_field(b) for b in real.V.basis],
        B=real.B.tolist(),
        sigma_coords=[v.coords.tolist() for v in real.vols],
        state_dependent=[v.scale_fn is not None for v in real.vols],
        drift_mode=rt.drift_mode,
        clauses=real.clauses,
        correction_norm=real.correction_norm,
        psi_method=real.psi_method,
        exit_code=0,
    )
    _write_json(os.path.join(out_dir, "analysis.json"), report)
    print(f"{rt.name}: CERTIFIED dim V = {real.dim} "
          f"(invariant, drift fiber-constant, volatility inside V)")
    return 0


# ---------------------------------------------------------------------------
# simulate


@dataclass
class Prepared:
    real: rz.Realization
    psi: rz.Curve
    v0: np.ndarray
    t_grid: np.ndarray


def _prepare(rt: cfgmod.Runtime, real: rz.Realization | None = None) -> Prepared:
    if real is None:
        real = cfgmod.build_scenario_realization(rt)
    t_grid = rt.t_grid()
    psi = rz.solve_psi(real, rt.h0, t_grid)
    _u0, v0 = rz.split_initial(real, rt.h0)
    return Prepared(real, psi, v0, t_grid)


def _realization_report(rt: cfgmod.Runtime, prep: Prepared, seed: int) -> dict:
    real = prep.real
    drift = real.drift
    u_norm = 0.0
    if drift.kind == "constant":
        if drift.u_vector is not None:
            u_norm = rz.space_norm(real.V.space, drift.u_vector)
        elif drift.u_symbolic is not None:
            u_norm = rz.space_norm(real.V.space,
                                   real.V.space.sample(drift.u_symbolic))
    return {
        "scenario": rt.name,
        "operator": type(rt.op).__name__,
        "space_size": real.V.space.size,
        "dim_V": real.dim,
        "basis": [_serialize_field(b) for b in real.V.basis],
        "B": real.B.tolist(),
        "sigma_coords": [v.coords.tolist() for v in real.vols],
        "drift": {"mode": rt.drift_mode, "kind": drift.kind,
                  "v_coords": (drift.v_coords.tolist()
                               if isinstance(drift.v_coords, np.ndarray) else None),
                  "complement_norm": u_norm},
        "v0": prep.v0.tolist(),
        "seed": seed,
        "scheme": rt.scheme,
        "psi_method": real.psi_method,
        "correction_norm": real.correction_norm,
        "clauses": real.clauses,
        "curve_meta": prep.psi.meta,
    }


def _ensemble_chunk(raw: dict, base_dir: str, seeds: tuple[int, ...]) -> np.ndarray:
    rt = cfgmod.build_runtime(raw, base_dir)
    prep = _prepare(rt)
    return rz.simulate_ensemble(prep.real, prep.psi, prep.v0, rt.driver,
                                list(seeds), scheme=rt.scheme)


def _write_ensemble_stats(path: str, t_grid: np.ndarray, coords: np.ndarray) -> None:
    mean = coords.mean(axis=0)
    var = coords.var(axis=0, ddof=1)
    d = coords.shape[2]
    with open(path, "w") as fh:
        head = ["t"] + [f"mean_{i + 1}" for i in range(d)] + \
            [f"var_{i + 1}" for i in range(d)]
        fh.write(",".join(head) + "\n")
        for n, t in enumerate(t_grid):
            row = [f"{t:.17g}"] + [f"{v:.17g}" for v in mean[n]] + \
                [f"{v:.17g}" for v in var[n]]
            fh.write(",".join(row) + "\n")


def run_simulate(rt: cfgmod.Runtime, out_dir: str, seed: int | None = None,
                 paths: int = 1, jobs: int = 1) -> int:
    os.makedirs(out_dir, exist_ok=True)
    seed = rt.seed if seed is None else seed
    prep = _prepare(rt)
    inc = levy.sample_increments(rt.driver, rt.dt, rt.n_t, seed)
    path = rz.simulate_coordinates(prep.real, prep.psi, prep.v0, inc,
                                   scheme=rt.scheme)
    rec = rz.reconstruct(prep.psi, path, prep.real.V)
    axis = rt.space.axis()

    oracle.write_grid_path(rz.GridPath(prep.t_grid, axis, prep.psi.values, seed),
                           os.path.join(out_dir, "psi.csv"))
    oracle.write_coordinate_csv(prep.t_grid, path.coords,
                                os.path.join(out_dir, "Y.csv"))
    oracle.write_grid_path(rec, os.path.join(out_dir, "r.csv"))
    levy.write_increments_csv(inc, os.path.join(out_dir, "increments.csv"))
    _write_json(os.path.join(out_dir, "realization.json"),
                _realization_report(rt, prep, seed))

    if paths > 1:
        seeds = [seed + i for i in range(paths)]
        if jobs > 1:
            chunks = [tuple(seeds[i::jobs]) for i in range(jobs)]
            chunks = [c for c in chunks if c]
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(_ensemble_chunk,
                                      [rt.raw] * len(chunks),
                                      ["."] * len(chunks), chunks))
            by_seed: dict[int, np.ndarray] = {}
            for chunk, arr in zip(chunks, parts):
                for j, s in enumerate(chunk):
                    by_seed[s] = arr[j]
            coords = np.stack([by_seed[s] for s in seeds])
        else:
            coords = rz.simulate_ensemble(prep.real, prep.psi, prep.v0,
                                          rt.driver, seeds, scheme=rt.scheme)
        _write_ensemble_stats(os.path.join(out_dir, "ensemble_stats.csv"),
                              prep.t_grid, coords)

    print(f"{rt.name}: wrote psi.csv, Y.csv, r.csv, increments.csv, "
          f"realization.json to {out_dir}" +
          (", ensemble_stats.csv" if paths > 1 else ""))
    return 0


# ---------------------------------------------------------------------------
# verify


def _refine_runtime(rt: cfgmod.Runtime, factor: int) -> cfgmod.Runtime:
    space = rt.space
    if isinstance(space, rz.GridSpace) and factor > 1:
        g = space.grid
        fine = Grid1D.from_interval(g.x0, g.x0 + g.dx * (g.n - 1),
                                    (g.n - 1) * factor + 1)
        space = rz.GridSpace(fine, space.weight, space.label)
    elif isinstance(space, rz.ProfileRaySpace) and factor > 1:
        g = space.ray.grid
        fine = Grid1D.from_interval(g.x0, g.x0 + g.dx * (g.n - 1),
                                    (g.n - 1) * factor + 1)
        space = rz.ProfileRaySpace(space.profiles,
                                   rz.GridSpace(fine, space.ray.weight))
    return dataclasses.replace(rt, space=space, n_t=rt.n_t * factor)


def _drift_for_oracle(rt: cfgmod.Runtime, real: rz.Realization):
    drift = real.drift
    if drift.kind == "zero":
        return None
    if drift.kind == "constant":
        vec = real.V.from_coords(drift.v_coords)
        if drift.u_vector is not None:
            vec = vec + drift.u_vector
        elif drift.u_symbolic is not None:
            vec = vec + real.V.space.sample(drift.u_symbolic)
        return vec
    raise MethodUnsupported("grid oracle supports zero or constant drift only")


def _sigma_for_oracle(rt: cfgmod.Runtime, real: rz.Realization) -> list:
    out = []
    for s in rt.sigma:
        if isinstance(s, rz.StateVol):
            base_vec = real.V.space.sample(s.base)
            scale, v_sub = s.scale_fn, real.V

            def fn(r, base_vec=base_vec, scale=scale, v_sub=v_sub):
                return scale(v_sub.coords(r)) * base_vec

            out.append(fn)
        else:
            out.append(real.V.space.sample(s))
    return out


def _exact_mode_amplitudes(rt: cfgmod.Runtime, indices, f) -> np.ndarray:
    """Amplitudes of f over the oracle's modes, exact or refused: numeric
    projection dust would be amplified by growing spectra."""
    space = rt.space
    if isinstance(space, rz.ModalSpace):
        vec = space.sample(f)
        pos = {idx: i for i, idx in enumerate(space.indices)}
        out = np.zeros(len(indices))
        for j, idx in enumerate(indices):
            if idx in pos:
                out[j] = vec[pos[idx]]
        return out
    if isinstance(f, QExpFunction):
        coefs, leftover = rz._modal_split_symbolic(rt.op, f, list(indices))
        if not leftover.is_zero:
            left_norm = rz.space_norm(space, space.sample(leftover))
            scale = max(rz.space_norm(space, space.sample(f)), 1e-300)
            if left_norm > 1e-9 * scale:
                raise UnstableConfig(
                    "modal oracle needs band-limited data; leftover relative "
                    f"norm {left_norm / scale:.3e}")
        return np.array([coefs[i] for i in indices])
    raise UnstableConfig("modal oracle needs symbolic data")


def _oracle_path(rt: cfgmod.Runtime, real: rz.Realization,
                 inc: levy.IncrementMatrix) -> rz.GridPath:
    kind = rt.verify.oracle
    if kind == "grid":
        if not isinstance(rt.space, rz.GridSpace):
            raise MethodUnsupported("grid oracle needs a grid space")
        return oracle.solve_spde_grid(
            rt.op, rt.space.grid, _drift_for_oracle(rt, real),
            _sigma_for_oracle(rt, real), rt.space.sample(rt.h0), inc,
            theta=rt.verify.theta)
    if kind == "modal":
        indices = list(rt.verify.oracle_modes) or (
            list(rt.space.indices) if isinstance(rt.space, rz.ModalSpace)
            else list(rt.modes))
        if not indices:
            raise ConfigError("modal oracle needs oracle_modes")
        gmax = max(abs(operators.generator_eigenvalue(rt.op, i)) for i in indices)
        if gmax * rt.horizon > 700.0:
            raise UnstableConfig(
                f"modal oracle would overflow: max |eigenvalue| x horizon = "
                f"{gmax * rt.horizon:.3g}")
        a0 = _exact_mode_amplitudes(rt, indices, rt.h0)
        alpha_vec = None
        if real.drift.kind == "constant":
            if rt.drift_mode == "hjm_levy":
                raise MethodUnsupported(
                    "sampled forward-curve drift has no exact mode split; "
                    "use the grid oracle")
            el = rt.drift_element
            if rt.drift_mode == "hjm_wiener":
                el = hjmm.hjm_drift_wiener(
                    cfgmod._sigma_bases(rt),
                    [c.brownian_vol for c in rt.driver.components])
            if el is not None:
                alpha_vec = _exact_mode_amplitudes(rt, indices, el)
        elif real.drift.kind != "zero":
            raise MethodUnsupported("modal oracle supports constant drift only")
        if any(isinstance(s, rz.StateVol) for s in rt.sigma):
            raise MethodUnsupported("modal oracle needs additive volatility")
        sig_rows = [np.asarray(_exact_mode_amplitudes(rt, indices, s))
                    for s in rt.sigma]
        amps = oracle.solve_spde_modal(rt.op, indices, alpha_vec, sig_rows,
                                       a0, inc)
        if isinstance(rt.space, rz.ModalSpace):
            pos = {idx: i for i, idx in enumerate(indices)}
            cols = [pos[idx] for idx in rt.space.indices]
            t_grid = np.arange(inc.n_steps + 1) * inc.dt
            return rz.GridPath(t_grid, rt.space.axis(), amps[:, cols], inc.seed)
        return oracle.modal_path_to_grid(rt.op, indices, amps, inc.dt,
                                         rt.space.grid, inc.seed)
    if kind == "ray_grid":
        if not isinstance(rt.space, rz.ProfileRaySpace):
            raise MethodUnsupported("ray oracle needs a profile x ray space")
        ray_grid = rt.space.ray.grid
        n = ray_grid.n
        h0_vec = rt.space.sample(rt.h0)
        alpha_vec = _drift_for_oracle(rt, real)
        sig_vecs = _sigma_for_oracle(rt, real)
        if any(callable(s) for s in sig_vecs):
            raise MethodUnsupported("ray oracle needs additive volatility")
        blocks = []
        for i in range(len(rt.space.profiles)):
            sl = slice(i * n, (i + 1) * n)
            part = oracle.solve_spde_grid(
                operators.Translation(), ray_grid,
                None if alpha_vec is None else alpha_vec[sl],
                [s[sl] for s in sig_vecs], h0_vec[sl], inc,
                theta=rt.verify.theta)
            blocks.append(part.values)
        t_grid = np.arange(inc.n_steps + 1) * inc.dt
        return rz.GridPath(t_grid, rt.space.axis(), np.hstack(blocks), inc.seed)
    raise MethodUnsupported(f"no oracle of kind {kind!r}")


def run_verify(rt: cfgmod.Runtime, out_dir: str, seed: int | None = None,
               refine: int = 1, mutate=None) -> int:
    os.makedirs(out_dir, exist_ok=True)
    if rt.verify.oracle == "none":
        raise MethodUnsupported(f"scenario {rt.name} declares no oracle")
    seed = rt.seed if seed is None else seed
    n_fine = rt.n_t * 2 ** refine
    inc_fine = levy.sample_increments(rt.driver, rt.horizon / n_fine,
                                      n_fine, seed)
    chain = [inc_fine]
    for _ in range(refine):
        chain.append(levy.aggregate_increments(chain[-1], 2))
    chain.reverse()  # chain[l] matches refinement level l

    levels = []
    h0_norm = None
    fol_max = None
    for lvl in range(refine + 1):
        rt_l = _refine_runtime(rt, 2 ** lvl)
        real = cfgmod.build_scenario_realization(rt_l)
        if mutate is not None:
            real = mutate(real)
        prep = _prepare(rt_l, real)
        path = rz.simulate_coordinates(real, prep.psi, prep.v0, chain[lvl],
                                       scheme=rt_l.scheme)
        rec = rz.reconstruct(prep.psi, path, real.V)
        orc = _oracle_path(rt_l, real, chain[lvl])
        metrics = oracle.compare_paths(rec, orc, rt_l.space.weights())
        if lvl == 0:
            h0_norm = rz.space_norm(rt_l.space, rt_l.space.sample(rt_l.h0))
            fol = oracle.foliation_distance(orc, prep.psi, real.V)
            fol_max = float(fol.max())
        levels.append({
            "level": lvl,
            "n_t": rt_l.n_t,
            "space_size": rt_l.space.size,
            "sup_error": metrics.sup_error,
            "relative": metrics.relative,
            "scale": metrics.scale,
        })

    bound = rt.verify.bound_rel_h0 * h0_norm
    sup0 = levels[0]["sup_error"]
    failures = []
    if sup0 > bound:
        failures.append(f"sup_error {sup0:.6g} above bound {bound:.6g}")
    for lvl in range(refine):
        prev, nxt = levels[lvl], levels[lvl + 1]
        floor = rt.verify.floor_rel * max(nxt["scale"], 1e-300)
        if nxt["sup_error"] > max(rt.verify.ratio_bound * prev["sup_error"], floor):
            failures.append(
                f"refinement {lvl}->{lvl + 1} ratio "
                f"{nxt['sup_error'] / max(prev['sup_error'], 1e-300):.3f} above "
                f"{rt.verify.ratio_bound}")
    report = {
        "scenario": rt.name,
        "oracle": rt.verify.oracle,
        "seed": seed,
        "bound": bound,
        "h0_norm": h0_norm,
        "levels": levels,
        "foliation_distance_max": fol_max,
        "passed": not failures,
        "failures": failures,
    }
    _write_json(os.path.join(out_dir, "verify.json"), report)
    if failures:
        print(f"{rt.name}: VERIFY FAILED - " + "; ".join(failures))
        return 5
    print(f"{rt.name}: VERIFIED sup error {sup0:.3e} <= {bound:.3e}, "
          f"{refine} refinement level(s) pass")
    return 0


# ---------------------------------------------------------------------------
# eigen


def _eigen_samples(op, index) -> np.ndarray:
    if isinstance(op, (operators.Cable, operators.TermStructure2)):
        xs = np.linspace(0.0, math.pi if isinstance(op, operators.Cable) else 1.0, 9)
        fn = operators.eigenfunction_qexp(op, index)
        return funalg.evaluate(fn, xs)
    if isinstance(op, operators.HeatDisk):
        pts = [(r, phi) for r in (0.25, 0.5, 0.75)
               for phi in (0.0, math.pi / 4, math.pi / 2)]
        return operators.SpectralFn(op, index).values(np.array(pts))
    xs = np.linspace(-2.0, 2.0, 9) if isinstance(op, operators.Hermite) \
        else np.linspace(0.0, 4.0, 9)
    d = op.d
    pts = np.tile(xs[:, None], (1, d))
    return operators.SpectralFn(op, index).values(pts)


def _index_token(index) -> str:
    if isinstance(index, tuple):
        return "-".join(str(p) for p in index)
    return str(index)


def run_eigen(args, out_dir: str) -> int:
    os.makedirs(out_dir, exist_ok=True)
    if args.operator == "cable":
        op = operators.Cable(args.tau, args.lambda_c)
    elif args.operator == "heat_disk":
        op = operators.HeatDisk(args.a)
    elif args.operator == "hermite":
        op = operators.Hermite(args.d)
    elif args.operator == "laguerre":
        op = operators.Laguerre(args.d)
    elif args.operator == "term_structure_2":
        op = operators.TermStructure2(args.kappa)
    else:
        raise UnsupportedOperator(
            f"operator {args.operator!r} has no discrete eigen catalog")
    if isinstance(op, operators.HeatDisk):
        indices = [(p, q, parity)
                   for p in range(args.p_max + 1)
                   for q in range(1, args.q_max + 1)
                   for parity in (("cos",) if p == 0 else ("cos", "sin"))]
        indices.sort(key=lambda i: (operators.bessel_zero(i[0], i[1]), i[2]))
        pairs = operators.eigenpairs(op, indices)
    else:
        pairs = operators.eigenpairs(op, args.count)
    path = os.path.join(out_dir, "eigen.csv")
    with open(path, "w") as fh:
        fh.write("index,eigenvalue,generator_eigenvalue,"
                 + ",".join(f"v{i + 1}" for i in range(9)) + "\n")
        for pair in pairs:
            samples = _eigen_samples(op, pair.index)
            fh.write(f"{_index_token(pair.index)},{pair.eigenvalue:.17g},"
                     f"{pair.generator_eigenvalue:.17g},"
                     + ",".join(f"{v:.17g}" for v in samples) + "\n")
    print(f"eigen catalog written to {path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affinespde",
        description="Finite-dimensional realizations of Levy-driven SPDEs: "
                    "analyze, simulate, verify, eigen catalogs.")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="run the realization decision procedure")
    pa.add_argument("--config", required=True,
                    help="scenario file or bundled scenario name")
    pa.add_argument("--out", default=None)

    ps = sub.add_parser("simulate", help="solve the reduced model and write paths")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", default=None)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--paths", type=int, default=1)
    ps.add_argument("--jobs", type=int, default=1)

    pv = sub.add_parser("verify", help="compare against the independent solver")
    pv.add_argument("--config", required=True)
    pv.add_argument("--out", default=None)
    pv.add_argument("--seed", type=int, default=None)
    pv.add_argument("--refine", type=int, default=1,
                    help="number of simultaneous halvings (default 1)")

    pe = sub.add_parser("eigen", help="write an eigenvalue/eigenfunction catalog")
    pe.add_argument("--operator", required=True,
                    choices=["cable", "heat_disk", "hermite", "laguerre",
                             "term_structure_2"])
    pe.add_argument("--count", type=int, default=5)
    pe.add_argument("--tau", type=float, default=1.0)
    pe.add_argument("--lambda-c", dest="lambda_c", type=float, default=1.0)
    pe.add_argument("--kappa", type=float, default=1.0)
    pe.add_argument("--a", type=float, default=1.0)
    pe.add_argument("--d", type=int, default=1)
    pe.add_argument("--p-max", dest="p_max", type=int, default=2)
    pe.add_argument("--q-max", dest="q_max", type=int, default=3)
    pe.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "eigen":
            out = _out_dir(args.out, f"eigen-{args.operator}")
            return run_eigen(args, out)
        rt = _load_runtime(args.config)
        out = _out_dir(args.out, rt.name)
        if args.command == "analyze":
            return run_analyze(rt, out)
        if args.command == "simulate":
            return run_simulate(rt, out, seed=args.seed, paths=args.paths,
                                jobs=args.jobs)
        return run_verify(rt, out, seed=args.seed, refine=args.refine)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except UnsupportedOperator as exc:
        print(f"unsupported operator: {exc}", file=sys.stderr)
        return 2
    except _CLAUSE_ERRORS as exc:
        if args.command == "analyze":
            print(f"analysis negative: {exc}", file=sys.stderr)
            return 3
        print(f"build failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 4
    except AffineSpdeError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
