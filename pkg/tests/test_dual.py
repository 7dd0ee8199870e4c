import numpy as np
import pytest

from hydrodual.analysis import perturb_certificate, sample_feasible_policy
from hydrodual.dual import (DualCertificate, build_dual,
                            certificate_from_solution, constant_C,
                            dual_constraint_residuals, dual_feasible,
                            dual_objective, policy_from_dual)
from hydrodual.lagrange import weak_duality_check
from hydrodual.model import (Cascade, DamSystem, Individual, TotalCap,
                             is_feasible, primal_objective)
from hydrodual.primal import build_primal, extract_policy
from hydrodual.solver import solve, solve_dual_simplex
from hydrodual.tree import conditional_expectation
from hydrodual.treegen import GeneratorSpec, generate_tree

from conftest import (make_system, random_nonneg_certificate,
                      single_scenario_tree, two_scenario_tree)


class TestConstant:
    def test_deterministic(self):
        tree = single_scenario_tree(2, price=[1.0, 2.0])
        assert constant_C(tree, make_system(v1=1, alpha=1.0)) == pytest.approx(2.0)

    def test_alpha_zero(self):
        tree = single_scenario_tree(2, price=[1.0, 2.0])
        assert constant_C(tree, make_system(v1=1, alpha=0.0)) == 0.0

    def test_paper_fixture_oracle(self, paper_tree):
        # independent per-scenario sum
        oracle = sum(0.2 * paper_tree.price[2, w, 0] *
                     (10.0 + paper_tree.inflow[:, w, 0].sum()) for w in range(5))
        assert oracle == pytest.approx(220.4)
        assert constant_C(paper_tree, make_system(v1=10, alpha=1.0)) == \
            pytest.approx(oracle, rel=1e-12)


class TestBuild:
    def test_minimal_columns_and_row(self):
        tree = single_scenario_tree(2, price=[1.0, 2.0])
        sys = make_system(v1=1, b=2, m=5, alpha=0.5)
        prob, maps = build_dual(tree, sys)
        fams = [c[0] for c in maps.cols]
        assert fams == ["gamma", "v", "lambda", "w"]
        assert prob.nrows == 1
        # row: gamma - v - lambda = -(S(2) - alpha S(2)); w_1 enters no row
        row = dict(zip(prob.row_cols[0], prob.row_vals[0]))
        assert row == {0: pytest.approx(1.0), 1: pytest.approx(-1.0),
                       2: pytest.approx(-1.0)}
        assert prob.rhs[0] == pytest.approx(-1.0)

    def test_total_cap_shared_v(self):
        tree = single_scenario_tree(2, price=[1.0, 3.0], n=2)
        sys = DamSystem(2, b=np.ones(2), m=np.full(2, 9.0), v1=np.ones(2),
                        alpha=1.0, variant=TotalCap(c_tilde=1.5))
        prob, maps = build_dual(tree, sys)
        v_cols = [j for j, c in enumerate(maps.cols) if c[0] == "v"]
        assert len(v_cols) == 1  # one shared column per (stage, full atom)
        hits = [r for r in range(prob.nrows)
                if v_cols[0] in prob.row_cols[r]]
        assert len(hits) == 2  # present in both dam rows

    def test_cascade_transfer_and_spill_rows(self):
        tree = single_scenario_tree(2, price=[[1.0, 1.0], [5.0, 4.0]], n=2)
        sys = DamSystem(2, b=np.ones(2), m=np.full(2, 9.0),
                        v1=np.array([2.0, 2.0]), alpha=0.5,
                        variant=Cascade(m_transfer=1.0, n_out=1.0))
        prob, maps = build_dual(tree, sys)
        tr = maps.row_index[("T", 1, 0, None)]
        sp = maps.row_index[("O", 1, 0, None)]
        # T=2: both extra rows have empty lambda/w tails
        row_tr = dict(zip(prob.row_cols[tr], prob.row_vals[tr]))
        gt = maps.col_index[("gamma_transfer", 1, 0, None)]
        vt = maps.col_index[("v_transfer", 1, 0, None)]
        assert row_tr == {gt: pytest.approx(1.0), vt: pytest.approx(-1.0)}
        # rhs = -alpha (S2(T) - S1(T)) = -0.5 * (4 - 5) = 0.5
        assert prob.rhs[tr] == pytest.approx(0.5)
        row_sp = dict(zip(prob.row_cols[sp], prob.row_vals[sp]))
        go = maps.col_index[("gamma_spill", 1, 0, None)]
        vo = maps.col_index[("v_spill", 1, 0, None)]
        assert row_sp == {go: pytest.approx(1.0), vo: pytest.approx(-1.0)}
        # rhs = +alpha S2(T) = 2.0
        assert prob.rhs[sp] == pytest.approx(2.0)

    def test_lambda_w_live_on_full_atoms(self, paper_tree, sys1):
        prob, maps = build_dual(paper_tree, sys1)
        lam_stage2 = [c for c in maps.cols if c[0] == "lambda" and c[1] == 2]
        gam_stage2 = [c for c in maps.cols if c[0] == "gamma" and c[1] == 2]
        assert len(lam_stage2) == paper_tree.full.n_atoms(2) == 5
        assert len(gam_stage2) == paper_tree.manager.n_atoms(2) == 3


class TestObjective:
    def test_zero_certificate_is_constant(self, paper_tree, sys1):
        cert = DualCertificate.zeros(paper_tree, sys1)
        assert dual_objective(cert, paper_tree, sys1) == \
            pytest.approx(constant_C(paper_tree, sys1))

    def test_single_lambda_unit(self, paper_tree, sys1):
        cert = DualCertificate.zeros(paper_tree, sys1)
        cert.lam[0][0, 0] = 1.0  # stage 1, root atom: weight v1 + empty sum
        assert dual_objective(cert, paper_tree, sys1) == \
            pytest.approx(constant_C(paper_tree, sys1) + sys1.v1[0])

    def test_brute_force_expectation_oracle(self, paper_tree, sys1):
        cert = random_nonneg_certificate(paper_tree, sys1, seed=8)
        # independent oracle: raw per-scenario expectation sums
        oracle = constant_C(paper_tree, sys1)
        for w in range(5):
            pw = paper_tree.p[w]
            for t in (1, 2):
                f = paper_tree.full.atom_of(t, w)
                a = paper_tree.manager.atom_of(t, w)
                cum = paper_tree.cum_inflow(t)[w, 0]
                oracle += pw * cert.lam[t - 1][f, 0] * (10.0 + cum)
                oracle += pw * cert.w[t - 1][f, 0] * (100.0 - 10.0 - cum)
                oracle += pw * cert.v[t - 1][a, 0] * 5.0
        assert dual_objective(cert, paper_tree, sys1) == pytest.approx(oracle, rel=1e-12)


class TestFeasibility:
    def _martingale_tree(self, seed=21):
        spec = GeneratorSpec(stages=4, dams=2, branching=(2, 2, 2), coarsen={3: 2})
        return generate_tree(spec, seed)

    def test_martingale_zero_certificate(self):
        tree = self._martingale_tree()
        sys = make_system(2, v1=2, b=3, m=50, alpha=1.0)
        ok, rep = dual_feasible(DualCertificate.zeros(tree, sys), tree, sys)
        assert ok, rep["max_residual"]

    def test_submartingale_gamma_certificate(self):
        spec = GeneratorSpec(stages=4, dams=1, branching=(2, 2, 1),
                             price_model="submartingale-drift", coarsen={2: 2})
        tree = generate_tree(spec, 5)
        sys = make_system(1, v1=2, b=3, m=60, alpha=1.0)
        cert = DualCertificate.zeros(tree, sys)
        for t in range(1, tree.stages):
            gap = tree.price[-1, :, 0] - tree.price[t, :, 0]
            cert.gamma[t - 1][:, 0] = conditional_expectation(tree, gap, t)
        assert np.all(cert.gamma[0] >= 0)
        ok, rep = dual_feasible(cert, tree, sys)
        assert ok, rep["max_residual"]

    def test_printed_gamma_variant_is_infeasible_on_strict_submartingale(self):
        # using E[S(T) - S(t)|G] instead of E[S(T) - S(t+1)|G] leaves a
        # residual equal to the one-step drift, so it cannot be feasible
        spec = GeneratorSpec(stages=3, dams=1, branching=(2, 1),
                             price_model="submartingale-drift", drift=0.2)
        tree = generate_tree(spec, 2)
        sys = make_system(1, v1=2, b=3, m=60, alpha=1.0)
        cert = DualCertificate.zeros(tree, sys)
        for t in range(1, tree.stages):
            gap = tree.price[-1, :, 0] - tree.price[t - 1, :, 0]
            cert.gamma[t - 1][:, 0] = conditional_expectation(tree, gap, t)
        ok, rep = dual_feasible(cert, tree, sys)
        assert not ok and rep["max_residual"] > 1e-6

    def test_negative_entry_rejected(self):
        tree = self._martingale_tree()
        sys = make_system(2, v1=2, b=3, m=50, alpha=1.0)
        cert = DualCertificate.zeros(tree, sys)
        cert.lam[0][0, 0] = -0.5
        ok, rep = dual_feasible(cert, tree, sys)
        assert not ok and rep["min_entry"] < 0

    def test_two_forms_agree_on_random_certificates(self, paper_tree, sys1):
        for seed in range(5):
            cert = random_nonneg_certificate(paper_tree, sys1, seed=seed)
            integral, conditional = dual_constraint_residuals(cert, paper_tree, sys1)
            for key, val in integral.items():
                mass = paper_tree.p[list(paper_tree.manager.at(key[1])[key[2]])].sum()
                assert val / mass == pytest.approx(conditional[key], abs=1e-12)

    def test_lp_solution_is_feasible_certificate(self, paper_tree_n2):
        sys = DamSystem(2, b=np.full(2, 5.0), m=np.full(2, 100.0),
                        v1=np.array([10.0, 8.0]), alpha=0.8,
                        variant=Cascade(m_transfer=3.0, n_out=2.0))
        prob, maps = build_dual(paper_tree_n2, sys)
        sol = solve_dual_simplex(prob)
        assert sol.status == "Optimal"
        cert = certificate_from_solution(sol, maps, paper_tree_n2, sys)
        ok, rep = dual_feasible(cert, paper_tree_n2, sys, tol=1e-6)
        assert ok, rep["max_residual"]
        assert dual_objective(cert, paper_tree_n2, sys) == \
            pytest.approx(sol.objective, rel=1e-8)


class TestWeakDuality:
    @pytest.mark.parametrize("variant", ["individual", "total_cap", "cascade"])
    def test_randomized_pairs(self, paper_tree_n2, variant):
        if variant == "individual":
            sys = make_system(2, v1=5, b=4, m=80, alpha=0.9)
        elif variant == "total_cap":
            sys = DamSystem(2, b=np.full(2, 4.0), m=np.full(2, 80.0),
                            v1=np.full(2, 5.0), alpha=0.9,
                            variant=TotalCap(c_tilde=6.0))
        else:
            sys = DamSystem(2, b=np.full(2, 4.0), m=np.full(2, 80.0),
                            v1=np.full(2, 5.0), alpha=0.9,
                            variant=Cascade(m_transfer=2.0, n_out=2.0))
        prob, maps = build_dual(paper_tree_n2, sys)
        sol = solve_dual_simplex(prob)
        base = certificate_from_solution(sol, maps, paper_tree_n2, sys)
        rng = np.random.default_rng(17)
        p_prob, _ = build_primal(paper_tree_n2, sys)
        p_opt = solve(p_prob).objective
        for k in range(10):
            policy = sample_feasible_policy(paper_tree_n2, sys, rng)
            cert = perturb_certificate(base, paper_tree_n2, sys, rng)
            chain = weak_duality_check(policy, cert, paper_tree_n2, sys)
            assert chain["holds"], chain
            # dual value also upper-bounds the primal optimum
            assert p_opt <= dual_objective(cert, paper_tree_n2, sys) + 1e-7


class TestManagerIndexingGap:
    """The design reason lambda/w live on full atoms.

    With the manager blind at stages 2 and 3 the water constraint at stage 3
    binds scenario-wise; its multiplier needs full-filtration resolution.
    Averaging it onto the manager atom stays feasible but pays the average
    inflow instead of the worst case, which strictly overshoots the optimum.
    """

    def _instance(self):
        tree = two_scenario_tree([1.0, 0.001, 0.001, 10.0],
                                 [1.0, 0.001, 0.001, 10.0],
                                 inflow1=[0.0, 1.0, 0.0],
                                 inflow2=[0.0, 5.0, 0.0],
                                 blind_stages=(2, 3))
        sys = make_system(1, v1=2, b=100, m=1000, alpha=0.0)
        return tree, sys

    def test_exact_dual_matches_primal(self):
        tree, sys = self._instance()
        p = solve(build_primal(tree, sys)[0])
        d = solve_dual_simplex(build_dual(tree, sys)[0])
        # optimum: drain everything at stage 3; blind drain capped by the
        # worst-case water level 2 + min(1, 5) = 3, sold at price 10
        assert p.objective == pytest.approx(30.0, rel=1e-6)
        assert d.objective == pytest.approx(p.objective, rel=1e-8)

    def test_projection_onto_manager_atoms_opens_gap(self):
        tree, sys = self._instance()
        prob, maps = build_dual(tree, sys)
        sol = solve_dual_simplex(prob)
        cert = certificate_from_solution(sol, maps, tree, sys)
        proj = certificate_from_solution(sol, maps, tree, sys)
        for t in range(1, tree.stages):
            for fam in (proj.lam, proj.w):
                scen = fam[t - 1][tree.full.atom_index[t - 1], 0]
                ce = conditional_expectation(tree, scen, t)
                for f, atom in enumerate(tree.full.at(t)):
                    fam[t - 1][f, 0] = ce[tree.manager.atom_of(t, atom[0])]
        ok, _ = dual_feasible(proj, tree, sys)
        assert ok  # projection preserves every integral constraint
        assert dual_objective(proj, tree, sys) > sol.objective + 1.0


class TestOrdering:
    def test_pooled_capacity_can_strictly_beat_individual(self):
        # two dams, asymmetric prices, tight per-dam caps: pooling the
        # turbines at c_tilde = sum b is a relaxation, never a restriction
        tree = single_scenario_tree(2, price=[[1.0, 1.0], [10.0, 1.0]], n=2)
        ind = DamSystem(2, b=np.ones(2), m=np.full(2, 50.0),
                        v1=np.full(2, 10.0), alpha=0.0, variant=Individual())
        tc = DamSystem(2, b=np.ones(2), m=np.full(2, 50.0),
                       v1=np.full(2, 10.0), alpha=0.0,
                       variant=TotalCap(c_tilde=float(ind.b.sum())))
        p_ind = solve(build_primal(tree, ind)[0]).objective
        p_tc = solve(build_primal(tree, tc)[0]).objective
        assert p_ind == pytest.approx(11.0)  # (1,1) at prices (10,1)
        assert p_tc == pytest.approx(20.0)   # (2,0) at prices (10,1)
        assert p_tc > p_ind

    def test_individual_never_exceeds_pooled(self):
        # feasible-set inclusion: per-dam caps imply the summed cap
        for seed in range(6):
            spec = GeneratorSpec(stages=4, dams=2, branching=(2, 2, 1),
                                 coarsen={2: 2},
                                 price_model="iid-lognormal-discretized")
            tree = generate_tree(spec, seed)
            ind = make_system(2, v1=4, b=2, m=60, alpha=0.6)
            tc = DamSystem(2, b=ind.b, m=ind.m, v1=ind.v1, alpha=0.6,
                           variant=TotalCap(c_tilde=float(ind.b.sum())))
            p_ind = solve(build_primal(tree, ind)[0]).objective
            p_tc = solve(build_primal(tree, tc)[0]).objective
            assert p_ind <= p_tc + 1e-8 * max(1.0, abs(p_tc))


class TestPolicyFromDual:
    def test_matches_primal_extraction_on_hand_instance(self):
        tree = single_scenario_tree(2, price=[1.0, 2.0])
        sys = make_system(v1=1, b=2, m=5, alpha=0.5)
        p_prob, vmap = build_primal(tree, sys)
        p_sol = solve(p_prob)
        primal_policy = extract_policy(p_sol, vmap)
        d_prob, dmaps = build_dual(tree, sys)
        d_sol = solve_dual_simplex(d_prob)
        policy, info = policy_from_dual(d_sol, dmaps, tree, sys)
        assert policy.d[0][0, 0] == pytest.approx(primal_policy.d[0][0, 0], abs=1e-9)

    @pytest.mark.parametrize("seed", range(3))
    def test_recovers_optimal_policy_on_generated_trees(self, seed):
        spec = GeneratorSpec(stages=4, dams=2, branching=(2, 2, 1),
                             coarsen={2: 2},
                             price_model="iid-lognormal-discretized")
        tree = generate_tree(spec, seed + 50)
        sys = make_system(2, v1=4, b=2, m=70, alpha=0.6)
        d_prob, dmaps = build_dual(tree, sys)
        d_sol = solve_dual_simplex(d_prob)
        assert d_sol.status == "Optimal"
        policy, info = policy_from_dual(d_sol, dmaps, tree, sys)
        ok, bad = is_feasible(policy, tree, sys, tol=1e-7)
        assert ok, bad
        assert primal_objective(policy, tree, sys) == \
            pytest.approx(d_sol.objective, rel=1e-7)
        assert isinstance(info["unique"], bool)

    def test_non_optimal_rejected(self, paper_tree, sys1):
        _, dmaps = build_dual(paper_tree, sys1)

        class Fake:
            status = "Infeasible"
            optimal = False
        with pytest.raises(ValueError):
            policy_from_dual(Fake(), dmaps, paper_tree, sys1)
