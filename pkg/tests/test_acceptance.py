"""Acceptance suite: one test per exit criterion, each printing PASS/FAIL.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The reference-table reproduction criterion is conditional on real
binned world-income data being present under data/milanovic/ (one <year>.csv
per year, histogram format); it is skipped otherwise.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from conftest import MILANOVIC_DATA, binned_histogram, exact_curve, valley_ratio
from incomefit import models
from incomefit.empirical import (
    EmpiricalCurve,
    IncomeHistogram,
    load_histogram,
    subtract,
    to_ccdf_curve,
    to_pdf_curve,
)
from incomefit.fitter import FitConfig, fit, refit_nested
from incomefit.special import erf_fn, gamma_fn, reg_lower_incomplete_gamma


def report(name, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: {status}{suffix}")
    assert passed, f"{name}{suffix}"


def test_special_function_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)

    worst_gamma = 0.0
    for a in rng.uniform(0.001, 160.0, 250):
        lhs = gamma_fn(a + 1.0)
        worst_gamma = max(worst_gamma, abs(lhs - a * gamma_fn(a)) / lhs)

    worst_p = 0.0
    for _ in range(200):
        a = float(rng.uniform(0.05, 40.0))
        x = float(rng.uniform(0.0, 3.0 * a + 10.0))
        oracle, _ = integrate.quad(
            lambda t: t ** (a - 1.0) * math.exp(-t), 0.0, x,
            epsabs=1e-13, epsrel=1e-13,
        )
        worst_p = max(worst_p, abs(reg_lower_incomplete_gamma(a, x) - oracle / math.gamma(a)))

    worst_erf = 0.0
    for x in rng.uniform(-4.0, 4.0, 200):
        oracle, _ = integrate.quad(
            lambda t: 2.0 / math.sqrt(math.pi) * math.exp(-t * t), 0.0, float(x),
            epsabs=1e-13, epsrel=1e-13,
        )
        worst_erf = max(worst_erf, abs(erf_fn(float(x)) - oracle))

    elapsed = time.perf_counter() - start
    ok = worst_gamma <= 1e-10 and worst_p <= 1e-10 and worst_erf <= 1e-10 and elapsed < 10.0
    report(
        "special-function oracle suite",
        ok,
        f"gamma recurrence {worst_gamma:.1e}, P {worst_p:.1e}, erf {worst_erf:.1e}, "
        f"{elapsed:.1f}s",
    )


def _tail_cutoff_and_modes(model):
    """Far-tail cutoff and density modes from scipy.stats (independent route)."""
    from scipy import stats

    spec_components = (
        [model.params] if model.family in ("gamma", "lognormal")
        else [model.params.component1, model.params.component2]
    )
    hi = 0.0
    modes = []
    for comp in spec_components:
        if isinstance(comp, models.GammaParams):
            hi = max(hi, float(stats.gamma.ppf(1.0 - 1e-14, comp.shape, scale=comp.scale)))
            modes.append(max(comp.shape - 1.0, 0.1) * comp.scale)
        else:
            hi = max(hi, float(stats.lognorm.ppf(1.0 - 1e-14, comp.sigma,
                                                 scale=math.exp(comp.mu))))
            modes.append(math.exp(comp.mu - comp.sigma**2))
    return hi, modes


def test_closed_form_ccdf_vs_quadrature():
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    worst = 0.0
    for family in models.FAMILIES:
        for _ in range(50):
            a1, a2 = rng.uniform(0.3, 1.2, 2)
            n1, n2 = rng.uniform(1.0, 6.0, 2)
            m1, m2 = rng.uniform(200.0, 15000.0, 2)
            mu1, mu2 = rng.uniform(5.0, 10.0, 2)
            s1, s2 = rng.uniform(0.3, 1.1, 2)
            model = {
                "gamma": lambda: models.gamma_model(a1, n1, m1),
                "lognormal": lambda: models.lognormal_model(a1, mu1, s1),
                "bigamma": lambda: models.bigamma_model(a1, n1, m1, a2, n2, m2),
                "bilognormal": lambda: models.bilognormal_model(a1, mu1, s1, a2, mu2, s2),
            }[family]()
            hi, modes = _tail_cutoff_and_modes(model)
            total = models.total_amplitude(model)
            grid = np.geomspace(20.0, 120000.0, 20)
            closed = models.ccdf(model, grid)
            for x, c in zip(grid, closed):
                if c < 1e-4 * total:
                    continue  # quadrature's absolute floor dominates far tails
                breaks = sorted(m for m in modes if x < m < hi)
                oracle, _ = integrate.quad(
                    lambda t: models.pdf(model, t), x, hi,
                    points=breaks or None, epsabs=1e-13, epsrel=1e-11, limit=200,
                )
                worst = max(worst, abs(c - oracle) / oracle)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 60.0
    report(
        "closed-form CCDF vs quadrature",
        ok,
        f"worst relative {worst:.2e}, {elapsed:.1f}s",
    )


EXACT_TRUTHS = {
    "gamma": models.gamma_model(0.8, 2.2, 1500.0),
    "lognormal": models.lognormal_model(0.9, 7.4, 0.8),
    "bigamma": models.bigamma_model(0.6, 2.0, 400.0, 0.4, 4.0, 3000.0),
    "bilognormal": models.bilognormal_model(
        0.55, math.log(600.0), 0.6, 0.45, math.log(9000.0), 0.55
    ),
}


def test_exact_recovery_eight_cases():
    start = time.perf_counter()
    failures = []
    for family, truth in EXACT_TRUTHS.items():
        for target in ("pdf", "ccdf"):
            curve = exact_curve(truth, target)
            result = fit(curve, family, FitConfig(target=target))
            rel = float(
                np.max(np.abs(models.param_pack(result.model) / models.param_pack(truth) - 1.0))
            )
            if rel > 1e-6 or result.r_squared < 1.0 - 1e-12:
                failures.append(f"{family}/{target}: rel {rel:.1e}, R2 {result.r_squared!r}")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 30.0
    report(
        "exact-recovery fit (8 cases)",
        ok,
        f"{elapsed:.1f}s" + ("; " + "; ".join(failures) if failures else ""),
    )


def test_noisy_recovery_bilognormal():
    s = 0.6
    mu1, mu2 = math.log(500.0), math.log(500.0) + 3 * s
    truth = models.bilognormal_model(0.5, mu1, s, 0.5, mu2, s)
    x = np.geomspace(40.0, 80000.0, 100)
    clean = models.pdf(truth, x)
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(5000 + seed)
        y = np.clip(clean * (1.0 + 0.01 * rng.standard_normal(x.size)), 0.0, None)
        result = fit(EmpiricalCurve(x, y, "pdf"), "bilognormal", FitConfig(seed=seed))
        packed = models.param_pack(result.model)
        if (
            abs(packed[1] - mu1) / abs(mu1) <= 0.02
            and abs(packed[4] - mu2) / abs(mu2) <= 0.02
        ):
            hits += 1
    report("noisy-recovery fit (mu within 2%)", hits >= 18, f"{hits}/20 seeds")


def test_nested_model_guarantee_hundred_curves():
    rng = np.random.default_rng(13)
    config = FitConfig(multistart_count=2, seed=1)
    exceptions = 0
    for trial in range(100):
        components = [
            models.lognormal_model(
                float(rng.uniform(0.3, 1.2)),
                float(rng.uniform(5.0, 9.5)),
                float(rng.uniform(0.35, 1.0)),
            )
            for _ in range(int(rng.integers(1, 3)))
        ]
        hist = binned_histogram(components)
        noise = 1.0 + float(rng.uniform(0.0, 0.05)) * rng.standard_normal(hist.mass.size)
        mass = np.clip(hist.mass * noise, 1e-12, None)
        curve = to_pdf_curve(IncomeHistogram(hist.bin_edges, mass))
        family = "gamma" if trial % 2 else "lognormal"
        uni = fit(curve, family, config)
        bi = refit_nested(curve, uni, config)
        if bi.ss_res > uni.ss_res + 1e-12:
            exceptions += 1
    report("nested-model guarantee (100 curves)", exceptions == 0,
           f"{exceptions} exceptions")


def test_qualitative_world_reproduction():
    # three-component world: poor bump, China+India bump, rich bump
    poor = models.lognormal_model(0.45, math.log(800.0), 0.55)
    middle = models.lognormal_model(0.25, math.log(2500.0), 0.45)
    rich = models.lognormal_model(0.30, math.log(16000.0), 0.50)
    world = binned_histogram([poor, middle, rich], label="world")
    middle_hist = binned_histogram([middle], label="middle")

    curve = to_pdf_curve(world, per_log_income=True)
    uni = fit(curve, "lognormal")
    bi = refit_nested(curve, uni)
    delta = bi.r_squared - uni.r_squared

    residual = subtract(world, [middle_hist])
    before = valley_ratio(to_pdf_curve(world, per_log_income=True))
    after = valley_ratio(to_pdf_curve(residual, per_log_income=True))
    valley_reopens = before is not None and after is not None and after < before

    ok = delta >= 0.05 and valley_reopens
    report(
        "qualitative world reproduction",
        ok,
        f"dR2 {delta:.3f}, valley ratio {before} -> {after}",
    )


def test_determinism_to_last_digit():
    hist = binned_histogram([EXACT_TRUTHS["bilognormal"]])
    rng = np.random.default_rng(3)
    mass = np.clip(hist.mass * (1.0 + 0.02 * rng.standard_normal(hist.mass.size)),
                   1e-12, None)
    curve = to_pdf_curve(IncomeHistogram(hist.bin_edges, mass))
    config = FitConfig(seed=2718)
    first = fit(curve, "bilognormal", config)
    second = fit(curve, "bilognormal", config)
    identical = (
        np.array_equal(models.param_pack(first.model), models.param_pack(second.model))
        and first.r_squared == second.r_squared
        and first.ss_res == second.ss_res
        and first.iterations == second.iterations
    )
    report("determinism", identical)


# published reference R^2 values per year for the six fitted columns
REFERENCE_R2 = {
    "gamma:pdf": {1988: 0.69068, 1993: 0.73948, 1998: 0.72081, 2003: 0.73558,
                  2008: 0.72134, 2011: 0.69562, 2018: 0.85627},
    "bigamma:pdf": {1988: 0.96115, 1993: 0.9499, 1998: 0.94064, 2003: 0.93372,
                    2008: 0.94681, 2011: 0.94975, 2018: 0.85627},
    "bigamma:ccdf": {1988: 0.99782, 1993: 0.99712, 1998: 0.99721, 2003: 0.99711,
                     2008: 0.99685, 2011: 0.99743, 2018: 0.99896},
    "lognormal:pdf": {1988: 0.77358, 1993: 0.8366, 1998: 0.84092, 2003: 0.85684,
                      2008: 0.86455, 2011: 0.90122, 2018: 0.98991},
    "bilognormal:pdf": {1988: 0.99383, 1993: 0.98898, 1998: 0.98634, 2003: 0.98224,
                        2008: 0.99129, 2011: 0.99729, 2018: 0.99973},
    "bilognormal:ccdf": {1988: 0.99989, 1993: 0.99987, 1998: 0.99981, 2003: 0.99976,
                         2008: 0.99991, 2011: 0.99995, 2018: 0.99999},
}

YEARS = (1988, 1993, 1998, 2003, 2008, 2011, 2018)


def _best_bimodal(curve, family, config):
    uni = fit(curve, models.unimodal_counterpart(family), config)
    nested = refit_nested(curve, uni, config)
    direct = fit(curve, family, config)
    return nested if nested.ss_res <= direct.ss_res else direct


def compute_reference_columns(files, multistart=8):
    """R^2 per (column, year) for the six fitted columns of the analysis."""
    computed = {}
    for year, path in files.items():
        hist = load_histogram(path)
        pdf_curve = to_pdf_curve(hist, normalize=True, per_log_income=True)
        ccdf_curve = to_ccdf_curve(hist, normalize=True)
        config_pdf = FitConfig(target="pdf", seed=year, multistart_count=multistart)
        config_ccdf = FitConfig(target="ccdf", seed=year, multistart_count=multistart)

        computed[("gamma:pdf", year)] = fit(pdf_curve, "gamma", config_pdf).r_squared
        computed[("lognormal:pdf", year)] = fit(
            pdf_curve, "lognormal", config_pdf
        ).r_squared
        computed[("bigamma:pdf", year)] = _best_bimodal(
            pdf_curve, "bigamma", config_pdf
        ).r_squared
        computed[("bilognormal:pdf", year)] = _best_bimodal(
            pdf_curve, "bilognormal", config_pdf
        ).r_squared
        computed[("bigamma:ccdf", year)] = _best_bimodal(
            ccdf_curve, "bigamma", config_ccdf
        ).r_squared
        computed[("bilognormal:ccdf", year)] = _best_bimodal(
            ccdf_curve, "bilognormal", config_ccdf
        ).r_squared
    return computed


def test_reference_pipeline_runs_on_synthetic_standins(tmp_path):
    # not a criterion: exercises the conditional pipeline end to end
    from conftest import FIXTURES
    import shutil

    files = {}
    for year, name in ((1988, "synthetic_world3.csv"), (2018, "synthetic_bimodal.csv")):
        target = tmp_path / f"{year}.csv"
        shutil.copy(FIXTURES / name, target)
        files[year] = target
    computed = compute_reference_columns(files, multistart=2)
    assert len(computed) == 12
    for value in computed.values():
        assert 0.0 < value <= 1.0


def test_reference_table_reproduction_conditional():
    available = {y: MILANOVIC_DATA / f"{y}.csv" for y in YEARS}
    if not all(p.exists() for p in available.values()):
        print("ACCEPTANCE reference-table reproduction: SKIPPED "
              "(conditional: no data/milanovic/<year>.csv present)")
        pytest.skip("Lakner-Milanovic binned data not present")

    computed = compute_reference_columns(available)
    failures = []
    for column, by_year in REFERENCE_R2.items():
        for year, expected in by_year.items():
            got = computed[(column, year)]
            if abs(got - expected) > 0.02:
                failures.append(f"{column}/{year}: {got:.5f} vs {expected}")
    for year in YEARS:
        if computed[("bilognormal:pdf", year)] < computed[("bigamma:pdf", year)]:
            failures.append(f"ordering bilognormal<bigamma in {year}")
        for column in ("bigamma:ccdf", "bilognormal:ccdf"):
            if computed[(column, year)] < 0.996:
                failures.append(f"{column}/{year} below 0.996")

    report("reference-table reproduction", not failures, "; ".join(failures) or "all cells")
