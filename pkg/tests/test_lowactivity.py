"""Low-activity bounds: activities, counting, majorants, FP criterion."""

import math

import numpy as np
import pytest

from znlab import defects as df
from znlab import fieldmath as fm
from znlab import lowactivity as la
from znlab import spacetime as st
from znlab.cells import FieldChain, build_torus, dualize, suspend
from support import random_weights, straight_loop


def full_instance(N=2, M=1, seed=5):
    spatial = build_torus(2, 2)
    dc_sp = dualize(spatial)
    S = suspend(spatial, M)
    dc = dualize(S)
    rng = np.random.default_rng(seed)
    w = random_weights(S, 1, N, rng)
    return spatial, dc_sp, S, dc, w, rng


def tiny_instance(N=3, seed=31):
    spatial = build_torus(1, 2)
    dc_sp = dualize(spatial)
    S = suspend(spatial, 2)
    dc = dualize(S)
    rng = np.random.default_rng(seed)
    w = random_weights(S, 1, N, rng)
    return spatial, dc_sp, S, dc, w, rng


def low_activity_weights(S, N, rng, eps=0.002):
    """Weight tables whose defect amplitudes are uniformly small."""
    w = random_weights(S, 1, N, rng)
    w.W[:] = 0.0
    w.W[:, 0] = 1.0
    w.W[:, 1:] = eps * (rng.normal(size=(S.num_cells(2), N - 1))
                        + 1j * rng.normal(size=(S.num_cells(2), N - 1)))
    w.V[:] = 1.0
    w.V[:, 1:] += eps * (rng.normal(size=(S.num_cells(1), N - 1))
                         + 1j * rng.normal(size=(S.num_cells(1), N - 1)))
    return w


def label_pair(pair, lm_head=(), le_head=()):
    """Sector label padded with zeros to the instance's class-group rank."""
    bm, be = pair.hd_dual.betti, pair.hd_primal.betti
    l_m = (tuple(lm_head) + (0,) * bm)[:bm]
    l_e = (tuple(le_head) + (0,) * be)[:be]
    return df.SectorLabel(l_m=l_m, l_e=l_e)


# -- uniform activity bounds -----------------------------------------------------


def test_uniform_amplitudes_code_limit():
    _, _, S, dc, w, _ = full_instance(N=2)
    beta_k = 2.6
    w.W[:] = 1.0
    w.W[:, 1] = math.exp(-beta_k)
    w.V[:] = 1.0
    t_m, t_e = la.uniform_amplitudes(df.defect_amplitudes(w))
    assert abs(t_m - math.exp(-beta_k)) < 1e-12
    assert t_e == 0.0


def test_trivial_weights_sit_outside_region():
    _, _, S, dc, w, _ = full_instance(N=2)
    w.W[:] = 1.0
    w.V[:] = 1.0
    t_m, t_e = la.uniform_amplitudes(df.defect_amplitudes(w))
    assert t_m == 1.0
    assert not la.region_check(t_m, 1.0).ok


def test_polymer_activity_bounded_by_uniform_power():
    _, _, S, dc, w, _ = full_instance(N=3, seed=8)
    amp = df.defect_amplitudes(w)
    t_m, t_e = la.uniform_amplitudes(amp)
    for species, t in (("magnetic", t_m), ("electric", t_e)):
        for A in df.enumerate_polymers(dc, 1, 3, species, 4):
            assert abs(df.polymer_activity(A, amp)) \
                <= t ** A.size * (1 + 1e-12)


# -- counting constants -----------------------------------------------------------


def test_counting_constant_formula_consistency():
    _, _, S, dc, w, _ = full_instance(N=3)
    for species in ("magnetic", "electric"):
        for variant in ("face", "coface"):
            crude = la.counting_constant(dc, 1, 3, species, mode="crude",
                                         variant=variant)
            sharp = la.counting_constant(dc, 1, 3, species, mode="sharp",
                                         variant=variant)
            assert crude.delta == sharp.delta
            assert crude.value == 2 * max(1, crude.delta ** 2)
            if sharp.delta >= 2:
                assert abs(sharp.value - 2 * math.e * (sharp.delta - 1)) \
                    < 1e-12
                assert sharp.value < crude.value


def test_sharp_falls_back_below_degree_two():
    # two-dimensional instance: no 3-cells, so the magnetic coface graph
    # is empty and the sharp formula does not apply
    S = suspend(build_torus(1, 2), 1)
    dc = dualize(S)
    rep = la.counting_constant(dc, 1, 2, "magnetic", mode="sharp",
                               variant="coface")
    assert rep.delta == 0
    assert rep.value == 1.0
    assert rep.note != ""


def test_census_matches_catalog_and_respects_bounds():
    N = 2
    _, _, S, dc, w, _ = full_instance(N=N)
    max_size = 4
    for species in ("magnetic", "electric"):
        n_car = S.num_cells(la.carrier_degree(1, species))
        roots = list(range(n_car))
        census = la.polymer_census(dc, 1, N, species, roots, max_size)
        catalog = df.enumerate_polymers(dc, 1, N, species, max_size)
        for u in roots:
            for n in range(1, max_size + 1):
                direct = sum(1 for A in catalog
                             if u in A.carrier and A.size == n)
                assert census[u][n] == direct
        rep = la.counting_constant(dc, 1, N, species, mode="empirical",
                                   roots=roots, max_size=max_size)
        sharp = la.counting_constant(dc, 1, N, species, mode="sharp")
        crude = la.counting_constant(dc, 1, N, species, mode="crude")
        for n, cnt in rep.census.items():
            assert cnt <= sharp.value ** n * (1 + 1e-12)
            assert cnt <= crude.value ** n * (1 + 1e-12)
            assert cnt <= rep.value ** n * (1 + 1e-12)


def test_census_translation_symmetry():
    N = 2
    _, _, S, dc, w, _ = full_instance(N=N)
    # edges along the same axis through different vertices agree
    u1 = S.index[1][((0, 0, 0), (0,))]
    u2 = S.index[1][((1, 1, 0), (0,))]
    census = la.polymer_census(dc, 1, N, "electric", [u1, u2], 4)
    assert census[u1] == census[u2]


# -- region checks -----------------------------------------------------------------


def test_region_check_frozen_values():
    rep = la.region_check(0.25, 1.0, a=math.log(2))
    assert abs(rep.margin) < 1e-12
    assert rep.sup_threshold == 0.25
    assert la.region_check(0.249, 1.0, a=math.log(2)).ok
    for a in (0.1, math.log(2), 1.0, 3.0):
        assert not la.region_check(0.3, 1.0, a=a).ok
    rep = la.region_check(0.1, 1.0, a=1.0)
    assert abs(rep.threshold - math.exp(-1) * (1 - math.exp(-1))) < 1e-15
    assert rep.ok
    with pytest.raises(ValueError):
        la.region_check(0.1, 1.0, a=0.0)
    scans = la.region_scan(0.01, 2.0, [0.2, math.log(2), 2.0])
    assert all(r.ok for r in scans)


# -- majorant gas ------------------------------------------------------------------


def test_majorant_partition_frozen_cases():
    assert la.majorant_partition([]) == 1.0
    _, _, S, dc, w, _ = full_instance(N=2, seed=19)
    catalog = df.enumerate_polymers(dc, 1, 2, "electric", 4)
    A = catalog[0]
    assert abs(la.majorant_partition([A], activities=[0.3]) - 1.3) < 1e-15
    assert abs(la.pinned_majorant(A, [A], activities=[0.3]) - 0.3 / 1.3) \
        < 1e-15
    disjoint = next(B for B in catalog
                    if not set(B.support) & set(A.support))
    overlap = next(B for B in catalog
                   if B is not A and set(B.support) & set(A.support))
    z2 = la.majorant_partition([A, disjoint], activities=[0.3, 0.5])
    assert abs(z2 - (1 + 0.3 + 0.5 + 0.15)) < 1e-14
    z3 = la.majorant_partition([A, overlap], activities=[0.3, 0.5])
    assert abs(z3 - (1 + 0.3 + 0.5)) < 1e-14
    with pytest.raises(ValueError):
        la.pinned_majorant(A, [disjoint], activities=[0.5])


def test_majorant_monotone_in_activities():
    _, _, S, dc, w, rng = full_instance(N=2, seed=25)
    amp = df.defect_amplitudes(w)
    catalog = df.enumerate_polymers(dc, 1, 2, "electric", 4)
    acts = [abs(df.polymer_activity(A, amp)) for A in catalog]
    z1 = la.majorant_partition(catalog, activities=acts)
    for i in (0, len(acts) // 2, len(acts) - 1):
        bumped = list(acts)
        bumped[i] += 0.05
        assert la.majorant_partition(catalog, activities=bumped) > z1


def test_sector_amplitudes_majorized():
    spatial, dc_sp, S, dc, w, _ = full_instance(N=2, seed=33)
    amp = df.defect_amplitudes(w)
    pair = fm.linking_pair(dc, 1, 2)
    gas = df.polymer_gas(dc, 1, amp, pair)
    z_m, z_e = la.majorant_pair(gas)
    mu = straight_loop(dc_sp.dual, 1, (1, 0), 2)
    nu = straight_loop(spatial, 0, (0, 1), 2)
    bgs = [st.zero_background(dc, 1, 2),
           st.lift_background(dc, dc_sp, 1, 2, wilson=nu, thooft=mu)]
    for bg in bgs:
        vals = gas.all_sectors(bg)
        for v in vals.values():
            assert abs(v) <= z_m * z_e * (1 + 1e-9)
        rec = df.reconstruct_from_sectors(vals, bg, pair)
        assert abs(rec) <= z_m * z_e * (1 + 1e-9)


def test_direct_majorization_composite_modulus():
    # no sector decomposition exists at N = 4; the closed sum is bounded
    # by the product of the two positive majorants directly
    N = 4
    spatial = build_torus(1, 2)
    dc_sp = dualize(spatial)
    S = suspend(spatial, 1)
    dc = dualize(S)
    rng = np.random.default_rng(35)
    w = random_weights(S, 1, N, rng)
    amp = df.defect_amplitudes(w)
    cat_m = df.enumerate_polymers(dc, 1, N, "magnetic", S.num_cells(2))
    cat_e = df.enumerate_polymers(dc, 1, N, "electric", S.num_cells(1))
    z_m = la.majorant_partition(cat_m, amp=amp)
    z_e = la.majorant_partition(cat_e, amp=amp)
    thooft = FieldChain(dc_sp.dual, 0, N,
                        np.array([1] + [0] * (dc_sp.dual.num_cells(0) - 1)))
    bgs = [st.zero_background(dc, 1, N),
           st.lift_background(dc, dc_sp, 1, N,
                              wilson=straight_loop(spatial, 0, (0,), N)),
           st.lift_background(dc, dc_sp, 1, N, thooft=thooft)]
    for bg in bgs:
        assert abs(df.closed_defect_sum(dc, amp, bg)) \
            <= z_m * z_e * (1 + 1e-9)


# -- occupation expectations --------------------------------------------------------


def test_occupation_matches_finite_difference():
    spatial, dc_sp, S, dc, w, rng = tiny_instance(N=3, seed=31)
    amp = df.defect_amplitudes(w)
    pair = fm.linking_pair(dc, 1, 3)
    gas = df.polymer_gas(dc, 1, amp, pair)
    bg = st.lift_background(dc, dc_sp, 1, 3,
                            wilson=straight_loop(spatial, 0, (0,), 3))
    sector = label_pair(pair, lm_head=(1,), le_head=(2,))
    eps = 1e-4
    for A in (gas.polymers["magnetic"][0], gas.polymers["electric"][2]):
        occ = la.occupation_expectation(A, gas, mode="sector",
                                        sector=sector, bg=bg)
        rho = df.polymer_activity(A, amp)
        up = df.polymer_gas(dc, 1, amp, pair,
                            activity_override={A.key(): rho * (1 + eps)})
        dn = df.polymer_gas(dc, 1, amp, pair,
                            activity_override={A.key(): rho * (1 - eps)})
        fd = (up.sector(sector, bg) - dn.sector(sector, bg)) / (2 * eps)
        assert abs(occ - fd) < 1e-6 * max(1.0, abs(occ))
        # subtraction identity: marked sum = full gas minus gas without A
        rest = [B for sp in ("magnetic", "electric")
                for B in gas.polymers[sp] if B.key() != A.key()]
        without = df.polymer_gas(dc, 1, amp, pair, polymers=rest)
        diff = gas.sector(sector, bg) - without.sector(sector, bg)
        assert abs(occ - diff) < 1e-10 * max(1.0, abs(occ))
        # background mode against the reconstructed finite difference
        occ_bg = la.occupation_expectation(A, gas, mode="background", bg=bg)
        fd_bg = (df.reconstruct_from_sectors(up.all_sectors(bg), bg, pair)
                 - df.reconstruct_from_sectors(dn.all_sectors(bg), bg, pair)
                 ) / (2 * eps)
        assert abs(occ_bg - fd_bg) < 1e-6 * max(1.0, abs(occ_bg))


def test_zero_activity_polymer_has_zero_occupation():
    _, _, S, dc, w, _ = tiny_instance(N=3, seed=39)
    amp = df.defect_amplitudes(w)
    pair = fm.linking_pair(dc, 1, 3)
    gas0 = df.polymer_gas(dc, 1, amp, pair)
    A = gas0.polymers["electric"][0]
    gas = df.polymer_gas(dc, 1, amp, pair,
                         activity_override={A.key(): 0.0})
    assert la.occupation_expectation(A, gas, mode="sector",
                                     sector=label_pair(pair)) == 0.0


def test_occupation_not_in_catalog_rejected():
    _, _, S, dc, w, _ = tiny_instance(N=3, seed=40)
    amp = df.defect_amplitudes(w)
    pair = fm.linking_pair(dc, 1, 3)
    gas = df.polymer_gas(dc, 1, amp, pair, max_size=1)
    big = [A for A in df.enumerate_polymers(dc, 1, 3, "electric", 3)
           if A.size > 1]
    with pytest.raises(ValueError):
        la.occupation_expectation(big[0], gas, mode="sector",
                                  sector=label_pair(pair))


# -- bounds in the region ------------------------------------------------------------


@pytest.fixture(scope="module")
def region_instance():
    spatial = build_torus(2, 2)
    dc_sp = dualize(spatial)
    S = suspend(spatial, 1)
    dc = dualize(S)
    rng = np.random.default_rng(51)
    w = low_activity_weights(S, 2, rng)
    amp = df.defect_amplitudes(w)
    pair = fm.linking_pair(dc, 1, 2)
    gas = df.polymer_gas(dc, 1, amp, pair)
    bounds = la.activity_bounds(dc, 1, amp, mode="sharp")
    return spatial, dc_sp, dc, amp, pair, gas, bounds


def test_occupation_bound_inside_region(region_instance):
    spatial, dc_sp, dc, amp, pair, gas, bounds = region_instance
    for species in ("magnetic", "electric"):
        assert bounds.region(species).ok
    z_m, z_e = la.majorant_pair(gas)
    c_la = z_m * z_e
    bg = st.lift_background(
        dc, dc_sp, 1, 2,
        wilson=straight_loop(spatial, 0, (0, 1), 2),
        thooft=straight_loop(dc_sp.dual, 1, (1, 0), 2))
    sectors = [label_pair(pair), label_pair(pair, (1, 0, 1), (0, 1, 0))]
    for species in ("magnetic", "electric"):
        t, a = bounds.t(species), bounds.a(species)
        acts = [abs(v) for v in gas.per_polymer[species]["bare"]]
        for A in gas.polymers[species]:
            cap = c_la * (t * math.exp(a)) ** A.size * (1 + 1e-9)
            occ = la.occupation_expectation(A, gas, mode="background",
                                            bg=bg)
            assert abs(occ) <= cap
            for sec in sectors:
                occ = la.occupation_expectation(A, gas, mode="sector",
                                                sector=sec, bg=bg)
                assert abs(occ) <= cap
            # pinned majorant bound of the positive gas
            pinned = la.pinned_majorant(A, gas.polymers[species],
                                        activities=acts)
            assert pinned <= (t * math.exp(a)) ** A.size * (1 + 1e-9)


def test_tail_and_systole_bounds(region_instance):
    spatial, dc_sp, dc, amp, pair, gas, bounds = region_instance
    for species in ("magnetic", "electric"):
        rep = la.tail_and_systole(gas, bounds, species, l_values=(1, 2, 3))
        assert rep.tail_ok
        assert rep.bad_weight_ok
        assert rep.ratio < 1.0
        # single time-direction cells are closed and homologically
        # nontrivial when the time extent is 1, so the systole is 1
        assert rep.systole == 1
        assert rep.bad_lhs <= rep.bad_rhs


def test_no_unit_size_defects_at_time_extent_two():
    S = suspend(build_torus(2, 2), 2)
    dc = dualize(S)
    assert df.enumerate_polymers(dc, 1, 2, "electric", 1) == []
    cat2 = df.enumerate_polymers(dc, 1, 2, "electric", 2)
    assert cat2 and min(A.size for A in cat2) == 2


def test_tail_errors_outside_region(region_instance):
    spatial, dc_sp, dc, amp, pair, gas, bounds = region_instance
    bad = la.ActivityBounds(t_m=1.0, t_e=1.0, c_m=bounds.c_m,
                            c_e=bounds.c_e)
    with pytest.raises(ValueError):
        la.tail_and_systole(gas, bad, "electric")


# -- Fernandez-Procacci check ---------------------------------------------------------


def test_fp_neighborhood_frozen_cases():
    _, _, S, dc, w, _ = full_instance(N=2, seed=61)
    catalog = df.enumerate_polymers(dc, 1, 2, "electric", 4)
    A = catalog[0]
    disjoint = next(B for B in catalog
                    if not set(B.support) & set(A.support))
    overlap = next(B for B in catalog
                   if B is not A and set(B.support) & set(A.support))
    rep = la.fp_neighborhood_check([A], None, a=1e-9, activities=[0.3])
    assert abs(rep.max_star - 1.3) < 1e-8
    assert not rep.criterion_ok  # 0.3 * 1.3 > mu ~ 0.3 at tiny a
    rep = la.fp_neighborhood_check([A, overlap], None, a=1e-9,
                                   activities=[0.3, 0.5])
    assert abs(rep.max_star - 1.8) < 1e-8
    rep = la.fp_neighborhood_check([A, disjoint], None, a=1e-9,
                                   activities=[0.3, 0.5])
    # the disjoint polymer never enters A's incompatibility neighborhood
    assert abs(rep.max_star - 1.5) < 1e-8


def test_fp_chain_of_inequalities_in_region(region_instance):
    spatial, dc_sp, dc, amp, pair, gas, bounds = region_instance
    for species in ("magnetic", "electric"):
        catalog = gas.polymers[species]
        acts = [abs(v) for v in gas.per_polymer[species]["bare"]]
        rep = la.fp_neighborhood_check(catalog, None,
                                       a=bounds.a(species),
                                       activities=acts)
        assert rep.sitewise_ok
        assert rep.site_bound_ok
        assert rep.exp_bound_ok
        assert rep.criterion_ok


# -- CSV reports -----------------------------------------------------------------------


def test_csv_outputs():
    _, _, S, dc, w, _ = full_instance(N=2)
    rep = la.counting_constant(dc, 1, 2, "electric", mode="empirical",
                               roots=[0, 1], max_size=3)
    text = la.census_csv(rep)
    lines = text.strip().split("\n")
    assert lines[0].startswith("species,")
    assert len(lines) == 4
    reg = la.region_check(0.1, 1.0)
    out = la.region_csv([("electric", reg)])
    assert out.splitlines()[1].startswith("electric,")
    with pytest.raises(ValueError):
        la.census_csv(la.counting_constant(dc, 1, 2, "electric",
                                           mode="crude"))