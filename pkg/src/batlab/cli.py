"""Batch driver: run scenario files, emit machine-readable reports.

Commands::

    batlab verify   <scenario.json>   # constructions + residual checks
    batlab simulate <scenario.json>   # characteristic integration + drift
    batlab suite                      # all bundled scenarios, summary table

Common options: ``--out DIR`` (report directory), ``--seed N`` (64-bit RNG
seed recorded in every report), ``--jobs N`` (parallel scenarios in suite).

Exit codes: 0 all checks passed; 1 a tolerance failed (or too many skipped
samples); 2 scenario parse/validation error; 3 runtime numerical failure;
4 integration aborted (CFL violation or characteristic crossing), with partial
grid dumps retained.

Report schema: ``{scenario, paper_anchor, reports: [{equation, samples,
skipped, max_norm, rms_norm, tolerance, pass}], seed, version}``.  A check
also fails when more than 20% of its requested samples were skipped as
singular, so passes can never be manufactured by skipping.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, construct, hydro, jets, leznov, residuals, varlag
from .construct import ImplicitSolveConfig, LinearMap2
from .errors import (
    CFLViolationError,
    CharacteristicCrossingError,
    EvaluationError,
    ExprSyntaxError,
)
from .exprspec import eval_float, eval_jet, parse
from .residuals import ResidualReport, TransportPattern

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_ABORT = 4

MAX_SKIP_FRACTION = 0.2


class ScenarioError(ValueError):
    """Scenario file failed validation."""


# -- plumbing -------------------------------------------------------------------------


def _scenario_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(
        [seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())]))


def _parse_expr(text, where: str):
    if not isinstance(text, str):
        raise ScenarioError(f"{where}: expected an expression string, got {text!r}")
    try:
        return parse(text)
    except ExprSyntaxError as err:
        raise ScenarioError(f"{where}: {err}") from None


def _entry(equation: str, report: ResidualReport, tolerance: float,
           requested: int) -> dict:
    too_many_skipped = report.skipped_singular > MAX_SKIP_FRACTION * max(requested, 1)
    ok = (math.isfinite(report.max_norm) and report.max_norm <= tolerance
          and not too_many_skipped)
    return {
        "equation": equation,
        "samples": report.samples,
        "skipped": report.skipped_singular,
        "max_norm": report.max_norm,
        "rms_norm": report.rms_norm,
        "tolerance": tolerance,
        "pass": bool(ok),
    }


def _ratio_entry(equation: str, coarse: float, fine: float, min_ratio: float) -> dict:
    # Measured as fine/coarse, which must not exceed 1/min_ratio; identically
    # zero pairs (exactly satisfied identities) count as converged.
    if coarse <= 1e-14 and fine <= 1e-14:
        value = 0.0
    else:
        value = fine / max(coarse, 1e-300)
    tol = 1.0 / min_ratio
    return {
        "equation": equation,
        "samples": 2,
        "skipped": 0,
        "max_norm": value,
        "rms_norm": value,
        "tolerance": tol,
        "pass": bool(value <= tol),
    }


def _field_or(d: dict, key: str, default=None, required: bool = False):
    if key not in d:
        if required:
            raise ScenarioError(f"missing required field {key!r}")
        return default
    return d[key]


def _solve_config(block: dict | None) -> ImplicitSolveConfig:
    block = block or {}
    seed = block.get("seed", 1.0)
    if isinstance(seed, list):
        seed = tuple(float(s) for s in seed)
    bracket = block.get("bracket")
    if bracket is not None:
        bracket = (float(bracket[0]), float(bracket[1]))
    return ImplicitSolveConfig(
        newton_tol=float(block.get("newton_tol", 1e-12)),
        max_iter=int(block.get("max_iter", 50)),
        seed=seed,
        bracket=bracket,
    )


def _box_sampler(samples: dict, rng: np.random.Generator):
    low = np.asarray(_field_or(samples, "low", required=True), dtype=float)
    high = np.asarray(_field_or(samples, "high", required=True), dtype=float)
    count = int(_field_or(samples, "count", required=True))
    if low.shape != high.shape or np.any(low >= high):
        raise ScenarioError("samples box must satisfy low < high componentwise")
    return [rng.uniform(low, high) for _ in range(count)], count


# -- verify-kind cases -------------------------------------------------------------------


def _run_verify_case(case: dict, rng: np.random.Generator,
                     sink: dict | None = None) -> list[dict]:
    block = _field_or(case, "construct", required=True)
    op = _field_or(block, "op", required=True)
    label = case.get("label", op)
    checks = _field_or(case, "checks", required=True)
    entries = []

    if op == "solve_implicit_fg":
        handle = construct.solve_implicit_fg(
            _parse_expr(block["F"], "F"), _parse_expr(block["G"], "G"),
            _solve_config(block.get("config")))
        entries += _scalar_field_checks(handle, label, checks, case, rng, sink)
    elif op == "holo_sum":
        handle = construct.holo_sum(_parse_expr(block["f"], "f"),
                                    _parse_expr(block["g"], "g"))
        entries += _scalar_field_checks(handle, label, checks, case, rng, sink)
    elif op == "implicit_3d":
        handle = construct.implicit_3d(
            _parse_expr(block["F"], "F"), _parse_expr(block["G"], "G"),
            _parse_expr(block["K"], "K"), float(block.get("const_c", 0.0)),
            _solve_config(block.get("config")))
        entries += _scalar_field_checks(handle, label, checks, case, rng, sink)
    elif op == "parametric_hodograph":
        entries += _hodograph_checks(block, label, checks, case, rng, sink)
    elif op == "leznov":
        entries += _leznov_checks(block, label, checks, case, rng, sink)
    else:
        raise ScenarioError(f"unknown constructor op {op!r}")
    return entries


def _scalar_field_checks(handle, label, checks, case, rng,
                         sink: dict | None = None) -> list[dict]:
    points, requested = _box_sampler(_field_or(case, "samples", required=True), rng)
    if sink is not None:
        sink[label] = points
    entries = []
    for check in checks:
        eq = _field_or(check, "equation", required=True)
        tol = float(_field_or(check, "tolerance", required=True))
        if eq in ("complex_bateman", "euclidean_3d"):
            fn = residuals.complex_bateman if eq == "complex_bateman" \
                else residuals.euclidean_3d
            rep = residuals.sweep(eq, lambda: points, lambda p: fn(handle(p)))
            entries.append(_entry(f"{eq}[{label}]", rep, tol, requested))
        elif eq == "euclid_first_order":
            rep = residuals.sweep(
                eq, lambda: points,
                lambda p: residuals.euclidean_first_order(handle(p)))
            entries.append(_entry(f"{eq}[{label}]", rep, tol, requested))
        elif eq == "reparametrization":
            for htxt in check.get("maps", ["s^3 + s"]):
                comp = construct.reparametrize(handle, _parse_expr(htxt, "map"))
                target = check.get("target", "complex_bateman")
                fn = residuals.complex_bateman if target == "complex_bateman" \
                    else residuals.euclidean_3d
                rep = residuals.sweep(target, lambda: points,
                                      lambda p, c=comp: fn(c(p)))
                entries.append(_entry(
                    f"reparametrized_{target}[{label}:{htxt}]", rep, tol, requested))
        else:
            raise ScenarioError(f"check {eq!r} does not apply to {label!r}")
    return entries


def _hodograph_checks(block, label, checks, case, rng,
                      sink: dict | None = None) -> list[dict]:
    f = _parse_expr(block["f"], "f")
    g = _parse_expr(block["g"], "g")
    cfg = _solve_config(block.get("config"))
    phi, phibar = construct.parametric_hodograph(f, g, cfg)

    samples = _field_or(case, "samples", required=True)
    if samples.get("mode", "uv_box") != "uv_box":
        raise ScenarioError("hodograph cases sample the (u, v) parameter box")
    uv_points, requested = _box_sampler(samples, rng)
    tx_points = [construct.hodograph_forward(f, g, u0, v0) for u0, v0 in uv_points]
    if sink is not None:
        sink[label] = [(*tx, *uv) for tx, uv in zip(tx_points, uv_points)]

    entries = []
    for check in checks:
        eq = _field_or(check, "equation", required=True)
        tol = float(_field_or(check, "tolerance", required=True))
        if eq == "two_field_bateman":
            def both(item):
                (t, x), (u0, v0) = item
                jp = phi([t, x], seed=(u0, v0))
                jb = phibar([t, x], seed=(u0, v0))
                return (residuals.two_field_bateman(jp, jb),
                        residuals.two_field_bateman(jp, jb, conjugate=True))

            rep = residuals.sweep(eq, lambda: list(zip(tx_points, uv_points)), both)
            entries.append(_entry(f"{eq}[{label}]", rep, tol, requested))
        elif eq == "hodograph_identities":
            def identities(uv):
                return construct.hodograph_identity_residuals(f, g, uv[0], uv[1])

            rep = residuals.sweep(eq, lambda: uv_points, identities)
            entries.append(_entry(f"{eq}[{label}]", rep, tol, requested))
        elif eq == "roundtrip":
            worst = 0.0
            skipped = 0
            for (t, x), (u0, v0) in zip(tx_points, uv_points):
                try:
                    u1 = phibar([t, x], seed=(u0, v0)).value
                    v1 = phi([t, x], seed=(u0, v0)).value
                    t2, x2 = construct.hodograph_forward(f, g, u1, v1)
                except EvaluationError:
                    skipped += 1
                    continue
                scale = max(1.0, abs(t), abs(x))
                worst = max(worst, abs(t2 - t) / scale, abs(x2 - x) / scale)
            rep = ResidualReport(eq, requested - skipped, worst, worst, skipped)
            entries.append(_entry(f"{eq}[{label}]", rep, tol, requested))
        elif eq == "born_infeld":
            lam = float(check.get("lambda", 1.0))
            bi = construct.born_infeld_field(phibar, phi, lam)

            def bi_res(item):
                (t, x), (u0, v0) = item
                return residuals.born_infeld(bi([t, x], seed=(u0, v0)), lam)

            rep = residuals.sweep(eq, lambda: list(zip(tx_points, uv_points)), bi_res)
            entries.append(_entry(f"{eq}[{label}]", rep, tol, requested))

            def bi_cross(item):
                (t, x), (u0, v0) = item
                return construct.born_infeld_cross_residual(phibar, phi, lam, [t, x])

            rep = residuals.sweep("born_infeld_cross",
                                  lambda: list(zip(tx_points, uv_points)), bi_cross)
            entries.append(_entry(f"born_infeld_cross[{label}]", rep, tol, requested))
        elif eq == "linear_covariance":
            entries += _linear_covariance_check(
                (phi, phibar), f, g, uv_points, check, label, rng)
        elif eq == "reparametrized_two_field":
            for htxt in check.get("maps", ["s^3 + s"]):
                hmap = _parse_expr(htxt, "map")
                cphi = construct.reparametrize(phi, hmap)
                cbar = construct.reparametrize(phibar, hmap)

                def comp_res(item, a=cphi, b=cbar):
                    (t, x), (u0, v0) = item
                    jp = a([t, x], seed=(u0, v0))
                    jb = b([t, x], seed=(u0, v0))
                    return residuals.two_field_bateman(jp, jb)

                rep = residuals.sweep(eq, lambda: list(zip(tx_points, uv_points)),
                                      comp_res)
                entries.append(_entry(
                    f"reparametrized_two_field[{label}:{htxt}]", rep, tol, requested))
        else:
            raise ScenarioError(f"check {eq!r} does not apply to {label!r}")
    return entries


def _linear_covariance_check(pair, f, g, uv_points, check, label, rng) -> list[dict]:
    tol = float(_field_or(check, "tolerance", required=True))
    speed_tol = float(check.get("speed_tolerance", 1e-8))
    n_maps = int(check.get("maps", 10))
    maps = []
    while len(maps) < n_maps:
        a, b, c, d = rng.uniform(-2.0, 2.0, size=4)
        if abs(a * d - b * c) >= 0.3:
            maps.append(LinearMap2(a, b, c, d))

    res_samples = []
    speed_samples = []
    skipped = 0
    for m in maps:
        tphi, tphibar = construct.transform_solution(pair, m)
        mat = m.matrix()
        for u0, v0 in uv_points:
            t, x = construct.hodograph_forward(f, g, u0, v0)
            q = mat @ np.array([t, x])
            try:
                jp = tphi(q, seed=(u0, v0))
                jb = tphibar(q, seed=(u0, v0))
                res_samples.append(residuals.two_field_bateman(jp, jb))
                base = pair[1]([t, x], seed=(u0, v0))
                u_orig = base.grad[0] / base.grad[1]
                expected_u, _ = construct.moebius_transform((u_orig, u_orig), m)
                u_new = jb.grad[0] / jb.grad[1]
                speed_samples.append(residuals.ResidualSample(
                    u_new - expected_u, abs(u_new) + abs(expected_u)))
            except EvaluationError:
                skipped += 1
                continue
    requested = n_maps * len(uv_points)
    rep = residuals.grid_report("linear_covariance", res_samples, skipped)
    entries = [_entry(f"linear_covariance[{label}]", rep, tol, requested)]
    rep2 = residuals.grid_report("moebius_speed_match", speed_samples, skipped)
    entries.append(_entry(f"moebius_speed_match[{label}]", rep2, speed_tol, requested))
    return entries


def _leznov_checks(block, label, checks, case, rng,
                   sink: dict | None = None) -> list[dict]:
    n = int(_field_or(block, "n", required=True))
    sys_ = leznov.LeznovSystem(
        n=n,
        Q=[_parse_expr(q, "Q") for q in _field_or(block, "Q", required=True)],
        P=[_parse_expr(p, "P") for p in _field_or(block, "P", required=True)],
        cfg=_solve_config(block.get("config")),
    )
    points, requested = _box_sampler(_field_or(case, "samples", required=True), rng)
    if sink is not None:
        sink[label] = points
    entries = []
    for check in checks:
        eq = _field_or(check, "equation", required=True)
        tol = float(_field_or(check, "tolerance", required=True))
        if eq == "constraint_gap":
            worst = 0.0
            skipped = 0
            used = 0
            for z in points:
                try:
                    worst = max(worst, leznov.constraint_gap(sys_, z))
                    used += 1
                except EvaluationError:
                    skipped += 1
            rep = ResidualReport(eq, used, worst, worst, skipped)
            entries.append(_entry(f"{eq}[{label}]", rep, tol, requested))
        elif eq == "holomorphy":
            binding = check.get("speeds_on_x", "v")
            d_rep, dbar_rep = leznov.holomorphy_reports(sys_, points, binding)
            entries.append(_entry(f"d_phi[{label}]", d_rep, tol, requested))
            entries.append(_entry(f"dbar_phi[{label}]", dbar_rep, tol, requested))
        elif eq == "zero_curvature":
            binding = check.get("speeds_on_x", "v")
            rep = leznov.verify_zero_curvature(sys_, points, binding)
            entries.append(_entry(f"{eq}[{label}]", rep, tol, requested))
        elif eq == "complex_bateman":
            if n != 2:
                raise ScenarioError("complex_bateman check needs n = 2")
            handle = leznov.field_handle(sys_, 0)
            rep = residuals.sweep(eq, lambda: points,
                                  lambda p: residuals.complex_bateman(handle(p)))
            entries.append(_entry(f"{eq}[{label}]", rep, tol, requested))
        else:
            raise ScenarioError(f"check {eq!r} does not apply to {label!r}")
    return entries


# -- simulate-kind cases -----------------------------------------------------------------


def _run_simulate_case(case: dict, rng: np.random.Generator, out_dir: Path,
                       scenario_name: str, dump: bool) -> list[dict]:
    system = case.get("system", "two_field")
    label = case.get("label", system)
    checks = _field_or(case, "checks", required=True)
    resolutions = [int(r) for r in _field_or(case, "resolutions", required=True)]
    grid_block = _field_or(case, "grid", required=True)
    min_ratio = float(case.get("halving_ratio", 0.0))

    per_resolution: dict[int, dict[str, float]] = {}
    entries: list[dict] = []
    hs: dict[int, float] = {}

    for res in resolutions:
        if system == "two_field":
            spec = hydro.CharGridSpec(
                nx=res,
                t_end=float(_field_or(grid_block, "t_end", required=True)),
                x0=float(grid_block.get("x0", 0.0)),
                x1=float(grid_block.get("x1", hydro.TWO_PI)),
                cfl=float(grid_block.get("cfl", 0.5)),
                bc=grid_block.get("bc", "periodic"),
            )
            grid = hydro.integrate_characteristics(
                _parse_expr(case["init"]["u"], "init.u"),
                _parse_expr(case["init"]["v"], "init.v"), spec)
            hs[res] = grid.h
            if dump:
                hydro.dump_char_grid(
                    grid, out_dir / f"{scenario_name}.{label}.{res}.csv")
            per_resolution[res] = _two_field_checks(grid, checks, entries, label, res)
        elif system == "multifield":
            spec = hydro.MultiGridSpec(
                n2=res, n3=res,
                t_end=float(_field_or(grid_block, "t_end", required=True)),
                cfl=float(grid_block.get("cfl", 0.4)),
            )
            init = {k: _parse_expr(v, f"init.{k}") for k, v in case["init"].items()}
            grid = hydro.integrate_multifield(init, spec)
            hs[res] = grid.h2
            if dump:
                hydro.dump_multi_grid(
                    grid, out_dir / f"{scenario_name}.{label}.{res}.csv")
            per_resolution[res] = _multifield_checks(grid, checks, entries, label, res)
        else:
            raise ScenarioError(f"unknown system {system!r}")

    if min_ratio > 0 and len(resolutions) >= 2:
        coarse_res, fine_res = resolutions[0], resolutions[-1]
        for key in per_resolution[coarse_res]:
            entries.append(_ratio_entry(
                f"halving[{label}:{key}]",
                per_resolution[coarse_res][key],
                per_resolution[fine_res][key], min_ratio))
    return entries


def _two_field_checks(grid, checks, entries, label, res) -> dict[str, float]:
    measured: dict[str, float] = {}
    tol_h2 = grid.h**2
    for check in checks:
        eq = _field_or(check, "equation", required=True)
        coeff = float(check.get("tolerance_h2_coeff", 5.0))
        tol = coeff * tol_h2
        if eq == "conservation":
            for n in check.get("n_values", [1, 2, 3, 4, 5]):
                drift = hydro.conservation_drift(grid, int(n))
                rep = ResidualReport(f"conservation_s{n}", grid.nt * grid.nx,
                                     drift, drift, 0)
                entries.append(_entry(f"conservation_s{n}[{label}@{res}]", rep, tol,
                                      grid.nt * grid.nx))
                measured[f"s{n}"] = drift
        elif eq == "transport":
            m = grid.nt // 2
            for name, field, other in (("u", grid.u, grid.v), ("v", grid.v, grid.u)):
                samples = []
                for i in range(grid.nx):
                    jet = hydro.fd_jet_at(field, grid.dt, grid.h, m, i,
                                          periodic=grid.bc == "periodic")
                    samples.append(residuals.transport(
                        jet, [-other[m, i]], TransportPattern(0, (1,))))
                rep = residuals.grid_report(f"transport_{name}", samples)
                entries.append(_entry(f"transport_{name}[{label}@{res}]", rep, tol,
                                      grid.nx))
                measured[f"transport_{name}"] = rep.max_norm
        else:
            raise ScenarioError(f"check {eq!r} does not apply to two_field runs")
    return measured


def _multifield_checks(grid, checks, entries, label, res) -> dict[str, float]:
    measured: dict[str, float] = {}
    for check in checks:
        eq = _field_or(check, "equation", required=True)
        coeff = float(check.get("tolerance_h2_coeff", 1.0))
        tol = coeff * grid.h2**2
        if eq != "multifield_det":
            raise ScenarioError(f"check {eq!r} does not apply to multifield runs")
        deriv = {}
        for name in ("u1", "u2", "v1", "v2"):
            deriv[name] = hydro.fd_derivatives_multi(
                grid.fields[name], grid.dt, grid.h2, grid.h3)
        m = deriv["u1"][0].shape[0] // 2
        grads = []
        for name in ("u1", "u2", "v1", "v2"):
            g = deriv[name][1]
            grads.append(np.stack(
                [g[1][m].ravel(), g[2][m].ravel(), g[3][m].ravel()], axis=-1))
        # Fields constant to rounding satisfy the determinant identically;
        # their difference quotients are pure float noise with no scale.
        deriv_mag = max(np.abs(g).max() for g in grads)
        field_mag = max(np.abs(grid.fields[n]).max() for n in ("u1", "u2", "v1", "v2"))
        flat = deriv_mag <= 1e-10 * max(field_mag, 1.0) / min(grid.h2, grid.h3)
        for j, fname in ((1, "u1"), (2, "u2")):
            hs = deriv[fname][2]
            n_nodes = grads[0].shape[0]
            hess = np.zeros((n_nodes, 3, 3))
            for (a, b), arr in hs.items():
                hess[:, a - 1, b - 1] = arr[m].ravel()
                hess[:, b - 1, a - 1] = arr[m].ravel()
            raw, scale = residuals.multifield_det_grid(grads, hess)
            if flat:
                value = 0.0
            else:
                value = float(np.abs(raw).max() / max(scale.max(), 1e-300))
            rep = ResidualReport(f"multifield_det_j{j}", n_nodes, value, value, 0)
            entries.append(_entry(f"multifield_det_j{j}[{label}@{res}]", rep, tol,
                                  n_nodes))
            measured[f"det_j{j}"] = value
    return measured


# -- variational-kind cases ----------------------------------------------------------------


def _run_variational_case(case: dict, rng: np.random.Generator) -> list[dict]:
    label = case.get("label", "variational")
    src = _field_or(case, "source", required=True)
    f = _parse_expr(src["f"], "source.f")
    g = _parse_expr(src["g"], "source.g")
    cfg = _solve_config(src.get("config"))
    t_lo, t_hi = (float(v) for v in src["t_window"])
    x_lo, x_hi = (float(v) for v in src["x_window"])
    coeff = float(case.get("tolerance_h2_coeff", 5.0))
    min_ratio = float(case.get("halving_ratio", 0.0))
    resolutions = [int(n) for n in _field_or(case, "resolutions", required=True)]

    psi_choices = case.get("psi", ["s"])
    factors = case.get("factors", ["p/q"])
    vary_list = case.get("vary", ["psi", "phibar", "phi"])

    measured: dict[int, dict[str, float]] = {}
    entries: list[dict] = []
    for n in resolutions:
        t_nodes = np.linspace(t_lo, t_hi, n)
        x_nodes = np.linspace(x_lo, x_hi, n)
        phi, phibar = construct.hodograph_grid(f, g, cfg, t_nodes, x_nodes)
        ht = t_nodes[1] - t_nodes[0]
        hx = x_nodes[1] - x_nodes[0]
        tol = coeff * max(ht, hx) ** 2
        measured[n] = {}
        for factor in factors:
            func = varlag.DiscreteFunctional(ht=ht, hx=hx,
                                             factor=_parse_expr(factor, "factor"))
            for w in psi_choices:
                psi = varlag.psi_from(phibar, _parse_expr(w, "psi"))
                for vary in vary_list:
                    rep = varlag.variational_residual(
                        func, phi, phibar, psi, vary).report(vary)
                    key = f"{vary}|psi={w}|H={factor}"
                    entries.append(_entry(
                        f"variational_{vary}[{label}:psi={w},H={factor}@{n}]",
                        rep, tol, rep.samples))
                    measured[n][key] = rep.max_norm
                deg = varlag.onshell_degeneracy(func, phi, phibar, psi, tolerance=tol)
                rep = ResidualReport("degeneracy_action", phi.size,
                                     deg.action_normalized, deg.action_normalized, 0)
                entries.append(_entry(
                    f"degeneracy_action[{label}:psi={w},H={factor}@{n}]",
                    rep, tol, phi.size))

    if min_ratio > 0 and len(resolutions) >= 2:
        coarse, fine = resolutions[0], resolutions[-1]
        for key in measured[coarse]:
            entries.append(_ratio_entry(f"halving[{label}:{key}]",
                                        measured[coarse][key], measured[fine][key],
                                        min_ratio))
    return entries


# -- ad-kind cases ----------------------------------------------------------------------


def _random_expression(rng: np.random.Generator, names: list[str], depth: int):
    if depth == 0 or rng.uniform() < 0.3:
        if rng.uniform() < 0.6:
            return rng.choice(names)
        return f"{rng.uniform(0.2, 2.0):.3f}"
    kind = rng.choice(["add", "sub", "mul", "div", "func", "pow"])
    a = _random_expression(rng, names, depth - 1)
    b = _random_expression(rng, names, depth - 1)
    if kind == "add":
        return f"({a} + {b})"
    if kind == "sub":
        return f"({a} - {b})"
    if kind == "mul":
        return f"({a} * {b})"
    if kind == "div":
        return f"({a} / (2.5 + sin({b})))"
    if kind == "pow":
        return f"({a})^{int(rng.integers(2, 4))}"
    fn = rng.choice(["exp", "log", "sin", "cos", "sqrt"])
    if fn == "exp":
        return f"exp(0.3*({a}))"
    if fn in ("log", "sqrt"):
        return f"{fn}(3.5 + sin({a}))"
    return f"{fn}({a})"


def _fd_probe(spec, names, point, h):
    def value(p):
        return eval_float(spec, dict(zip(names, p)))

    k = len(point)
    grad = np.zeros(k)
    hess = np.zeros((k, k))
    f0 = value(point)
    for i in range(k):
        pp, pm = point.copy(), point.copy()
        pp[i] += h
        pm[i] -= h
        grad[i] = (value(pp) - value(pm)) / (2 * h)
        hess[i, i] = (value(pp) - 2 * f0 + value(pm)) / h**2
    for i in range(k):
        for j in range(i + 1, k):
            pa, pb, pc, pd = (point.copy() for _ in range(4))
            pa[[i, j]] += h
            pd[[i, j]] -= h
            pb[i] += h
            pb[j] -= h
            pc[i] -= h
            pc[j] += h
            hess[i, j] = hess[j, i] = (value(pa) - value(pb) - value(pc)
                                       + value(pd)) / (4 * h**2)
    return grad, hess


def _run_ad_case(case: dict, rng: np.random.Generator) -> list[dict]:
    count = int(case.get("expressions", 500))
    steps = [float(s) for s in case.get("steps", [1e-3, 5e-4])]
    min_ratio = float(case.get("min_ratio", 3.5))
    names = ["a", "b", "c"]
    defects = []
    produced = 0
    attempts = 0
    while produced < count and attempts < 20 * count:
        attempts += 1
        text = _random_expression(rng, names, depth=int(rng.integers(1, 4)))
        point = rng.uniform(0.4, 1.6, size=3)
        try:
            spec = parse(text)
            args = {n: jets.variable(i, point[i], 3) for i, n in enumerate(names)}
            jet = eval_jet(spec, args, k=3)
            errs = []
            for h in steps:
                g_fd, h_fd = _fd_probe(spec, names, point, h)
                errs.append(max(np.abs(g_fd - jet.grad).max(),
                                np.abs(h_fd - jet.hess).max()))
        except (EvaluationError, OverflowError):
            continue
        produced += 1
        scale = max(1.0, abs(jet.value), np.abs(jet.grad).max(),
                    np.abs(jet.hess).max())
        # Converged second order, or already at rounding level at the coarse
        # step (near-linear compositions have ~zero truncation error, so the
        # quotients are pure noise ~ eps * |f| / h^2 there).
        noise_floor = max(1e-8 * scale, 1e3 * 2.3e-16 * scale / steps[0] ** 2)
        ok = errs[0] / max(errs[1], 1e-300) >= min_ratio or errs[0] <= noise_floor
        defects.append(0.0 if ok else 1.0)
    if produced < count:
        raise ScenarioError("could not generate enough admissible expressions")
    arr = np.asarray(defects)
    rep = ResidualReport("ad_convergence", produced, float(arr.max()),
                         float(np.sqrt(np.mean(arr**2))), 0)
    return [_entry("ad_convergence", rep, 0.5, count)]


# -- scenario driver --------------------------------------------------------------------


def load_scenario(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ScenarioError(f"cannot load scenario {path}: {err}") from None
    for key in ("name", "paper_anchor", "kind", "cases"):
        if key not in data:
            raise ScenarioError(f"scenario {path}: missing field {key!r}")
    if data["kind"] not in ("verify", "simulate", "variational", "ad"):
        raise ScenarioError(f"scenario {path}: unknown kind {data['kind']!r}")
    if not isinstance(data["cases"], list) or not data["cases"]:
        raise ScenarioError(f"scenario {path}: cases must be a non-empty list")
    return data


def run_scenario(data: dict, out_dir: Path, seed: int, dump: bool = False) -> tuple[dict, int]:
    """Execute one loaded scenario; returns (report, exit code)."""
    rng = _scenario_rng(seed, data["name"])
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: list[dict] = []
    abort_code = None
    sample_sink: dict = {}
    try:
        for case in data["cases"]:
            if data["kind"] == "verify":
                entries += _run_verify_case(case, rng,
                                            sample_sink if dump else None)
            elif data["kind"] == "simulate":
                entries += _run_simulate_case(case, rng, out_dir, data["name"], dump)
            elif data["kind"] == "variational":
                entries += _run_variational_case(case, rng)
            else:
                entries += _run_ad_case(case, rng)
    except (CharacteristicCrossingError, CFLViolationError) as err:
        partial = getattr(err, "partial", None)
        if partial is not None:
            if isinstance(partial, hydro.CharGrid):
                hydro.dump_char_grid(partial, out_dir / f"{data['name']}.partial.csv")
            else:
                hydro.dump_multi_grid(partial, out_dir / f"{data['name']}.partial.csv")
        entries.append({
            "equation": f"aborted[level={err.level}]",
            "samples": 0, "skipped": 0,
            "max_norm": math.inf, "rms_norm": math.inf,
            "tolerance": 0.0, "pass": False,
        })
        abort_code = EXIT_ABORT

    report = {
        "scenario": data["name"],
        "paper_anchor": data["paper_anchor"],
        "reports": entries,
        "seed": int(seed),
        "version": __version__,
    }
    if dump and sample_sink:
        import csv as _csv

        for label, pts in sample_sink.items():
            with (out_dir / f"{data['name']}.{label}.samples.csv").open(
                    "w", newline="") as fh:
                w = _csv.writer(fh)
                w.writerow([f"c{i}" for i in range(len(pts[0]))])
                for p in pts:
                    w.writerow([repr(float(v)) for v in p])
    report_path = out_dir / f"{data['name']}.report.json"
    report_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    if abort_code is not None:
        return report, abort_code
    ok = all(e["pass"] for e in entries)
    return report, EXIT_PASS if ok else EXIT_FAIL


def bundled_scenarios() -> list:
    root = resources.files("batlab").joinpath("scenarios")
    return sorted((p for p in root.iterdir() if p.name.endswith(".json")),
                  key=lambda p: p.name)


def _run_bundled(args_tuple):
    name, text, out, seed = args_tuple
    data = json.loads(text)
    report, code = run_scenario(data, Path(out), seed)
    return name, data["paper_anchor"], report, code


def run_suite(out_dir: Path, seed: int, jobs: int = 1) -> int:
    tasks = [(p.name, p.read_text(), str(out_dir), seed) for p in bundled_scenarios()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_bundled, tasks))
    else:
        results = [_run_bundled(t) for t in tasks]

    width = max(len(r[2]["scenario"]) for r in results) + 2
    print(f"{'claim':<{width}}{'anchor':<44}{'max_norm':>12}{'tolerance':>12}  status")
    worst_code = EXIT_PASS
    for _, anchor, report, code in results:
        entries = report["reports"]
        failing = [e for e in entries if not e["pass"]]
        shown = failing[0] if failing else max(
            entries, key=lambda e: e["max_norm"] / max(e["tolerance"], 1e-300))
        status = "PASS" if code == EXIT_PASS else "FAIL"
        print(f"{report['scenario']:<{width}}{anchor[:42]:<44}"
              f"{shown['max_norm']:>12.3e}{shown['tolerance']:>12.3e}  {status}")
        worst_code = max(worst_code, code)
    return worst_code


# -- entry point --------------------------------------------------------------------------


def main(argv=None) -> int:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="reports", help="report output directory")
    common.add_argument("--seed", type=int, default=20240801, help="64-bit RNG seed")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel scenarios (suite)")

    parser = argparse.ArgumentParser(prog="batlab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_verify = sub.add_parser("verify", parents=[common],
                              help="run a verification scenario")
    p_verify.add_argument("scenario")
    p_verify.add_argument("--dump", action="store_true",
                          help="write sampled-point CSV dumps")
    p_sim = sub.add_parser("simulate", parents=[common],
                           help="run an integration scenario")
    p_sim.add_argument("scenario")
    p_sim.add_argument("--dump", action="store_true", help="write grid CSV dumps")
    sub.add_parser("suite", parents=[common], help="run all bundled scenarios")

    args = parser.parse_args(argv)
    out_dir = Path(args.out)

    if args.command == "suite":
        return run_suite(out_dir, args.seed, args.jobs)

    try:
        data = load_scenario(args.scenario)
        if args.command == "verify" and data["kind"] == "simulate":
            raise ScenarioError("simulate-kind scenario: use the simulate command")
        if args.command == "simulate" and data["kind"] != "simulate":
            raise ScenarioError("simulate needs a simulate-kind scenario")
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        _, code = run_scenario(data, out_dir, args.seed,
                               dump=getattr(args, "dump", False))
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EvaluationError, np.linalg.LinAlgError, ValueError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return code


if __name__ == "__main__":
    raise SystemExit(main())
