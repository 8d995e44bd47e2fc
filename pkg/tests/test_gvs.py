"""GVS layer: basis atoms, kinematics, statics fixed point, dynamics.

Oracles: analytic constant-curvature arc, adaptive quadrature of the planar
curve integrals (scipy), finite differences of the forward kinematics, and
hand fixed points of the static relation.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from strainwave.errors import (
    DegenerateTangent,
    NoConvergence,
    OutOfDomain,
    SingularMass,
    ValidationError,
)
from strainwave.gvs import (
    BasisDictionary,
    Configuration,
    DynamicsOptions,
    FourierAtom,
    GaussianAtom,
    PolynomialAtom,
    basis_matrix,
    family_atoms,
    forward_kinematics,
    generalized_damping,
    generalized_dynamics,
    generalized_stiffness,
    jacobian,
    jacobian_on_grid,
    mass_matrix,
    simulate,
    static_strain_solve,
    strain_at,
    strain_on_grid,
)
from strainwave.gvs import _static_fixed_point
from strainwave.liealg import adjoint_small, exp_se3
from strainwave.rodmodel import ActuatorRouting, RodProperties

RNG = np.random.default_rng(11)


def desk_rod(**overrides):
    params = dict(
        length=1.0,
        base_radius=0.1,
        density=1000.0,
        young_modulus=1.0e6,
        poisson_ratio=0.5,
        damping_coeff=1.0e4,
    )
    params.update(overrides)
    return RodProperties(**params)


def poly_dict(max_degree=2, modes=range(6), length=1.0):
    atoms = family_atoms("polynomial", max_degree)
    return BasisDictionary.from_atoms(length, {m: atoms for m in modes})


class TestBasis:
    def test_polynomial_column_values(self):
        d = poly_dict(2)
        b = basis_matrix(d, 0.5)
        sl = d.mode_slice(2)
        assert np.allclose(b[2, sl], [1.0, 0.5, 0.25], atol=0)
        # other rows of those columns are zero
        mask = np.ones(6, dtype=bool)
        mask[2] = False
        assert np.all(b[mask][:, sl] == 0.0)

    def test_fourier_constant_atom(self):
        atom = FourierAtom(0, "cos")
        s = np.linspace(0, 1, 7)
        assert np.all(atom.evaluate(s, 1.0) == 1.0)

    def test_gaussian_center_value(self):
        atom = GaussianAtom(1, 2)
        assert atom.evaluate(0.5, 1.0) == 1.0
        assert atom.width == 1.0 / (2.0 * math.sqrt(math.log(2.0)) * 2)

    def test_gaussian_fwhm_matches_spacing(self):
        # value at half the bump spacing from the centre is exactly 1/2
        atom = GaussianAtom(0, 4)
        assert atom.evaluate(0.5 / 4, 1.0) == pytest.approx(0.5, abs=1e-14)

    def test_duplicate_atoms_rejected(self):
        with pytest.raises(ValidationError):
            BasisDictionary.from_atoms(1.0, {2: [PolynomialAtom(1), PolynomialAtom(1)]})

    def test_out_of_domain(self):
        with pytest.raises(OutOfDomain):
            basis_matrix(poly_dict(1), 1.2)

    def test_labels_and_slices(self):
        d = BasisDictionary.from_atoms(
            1.0, {0: family_atoms("fourier", 1), 3: family_atoms("polynomial", 1)}
        )
        assert d.n_q == 5
        assert d.labels == ("kx:cos0", "kx:cos1", "kx:sin1", "sx:poly0", "sx:poly1")
        assert d.mode_slice(3) == slice(3, 5)

    def test_configuration_finite(self):
        with pytest.raises(ValidationError):
            Configuration(np.array([np.inf]), np.array([0.0]))


class TestStrainAt:
    def test_zero_coordinates_give_stress_free(self):
        d = poly_dict(2)
        rod = desk_rod()
        xi = strain_at(d, np.zeros(d.n_q), rod, 0.37)
        assert np.array_equal(xi.vector, [0, 0, 0, 1, 0, 0])

    def test_linearity(self):
        d = poly_dict(2)
        rod = desk_rod()
        q1, q2 = RNG.normal(size=d.n_q), RNG.normal(size=d.n_q)
        s = 0.61
        lhs = strain_at(d, q1 + q2, rod, s).vector - rod.stress_free(s)
        rhs = (strain_at(d, q1, rod, s).vector - rod.stress_free(s)) + (
            strain_at(d, q2, rod, s).vector - rod.stress_free(s)
        )
        assert np.allclose(lhs, rhs, atol=1e-14)

    def test_unit_constant_curvature_atom(self):
        d = poly_dict(1)
        rod = desk_rod()
        q = np.zeros(d.n_q)
        q[d.mode_slice(2).start] = 1.0
        assert np.allclose(strain_at(d, q, rod, 0.8).vector, [0, 0, 1, 1, 0, 0], atol=0)


class TestForwardKinematics:
    def test_pure_translation(self):
        d = poly_dict(1)
        rod = desk_rod()
        grid = np.linspace(0, 1, 11)
        poses = forward_kinematics(d, np.zeros(d.n_q), rod, grid)
        for s, g in zip(grid, poses):
            assert np.allclose(g.rotation, np.eye(3), atol=1e-14)
            assert np.allclose(g.position, [s, 0, 0], atol=1e-14)

    def test_analytic_arc_tip(self):
        # constant kappa_z = pi/2 with unit stretch: exact for the midpoint
        # rule, so the Delta-s = 1e-3 error is far below 1e-6 m
        d = poly_dict(1)
        rod = desk_rod()
        q = np.zeros(d.n_q)
        q[d.mode_slice(2).start] = math.pi / 2
        grid = np.arange(0, 1.0 + 1e-12, 1e-3)
        tip = forward_kinematics(d, q, rod, grid)[-1]
        err = np.linalg.norm(tip.position - np.array([2 / math.pi, 2 / math.pi, 0]))
        assert err < 1e-6

    @staticmethod
    def planar_tip_oracle(theta_fn, length=1.0):
        """Tip position of a planar unit-stretch rod via adaptive quadrature."""
        x = quad(lambda s: math.cos(theta_fn(s)), 0, length, epsabs=1e-14, epsrel=1e-13)[0]
        y = quad(lambda s: math.sin(theta_fn(s)), 0, length, epsabs=1e-14, epsrel=1e-13)[0]
        return np.array([x, y, 0.0])

    def test_order_two_convergence_on_varying_curvature(self):
        # kappa_z(s) = pi/2 + s has the planar solution with
        # theta(s) = pi/2 s + s^2/2; the midpoint rule converges at order 2
        d = poly_dict(1)
        rod = desk_rod()
        q = np.zeros(d.n_q)
        sl = d.mode_slice(2)
        q[sl.start] = math.pi / 2
        q[sl.start + 1] = 1.0
        target = self.planar_tip_oracle(lambda s: math.pi / 2 * s + s * s / 2)
        errors = []
        for n in (50, 100, 200):
            grid = np.linspace(0, 1, n + 1)
            tip = forward_kinematics(d, q, rod, grid)[-1]
            errors.append(np.linalg.norm(tip.position - target))
        assert 3.5 < errors[0] / errors[1] < 4.5
        assert 3.5 < errors[1] / errors[2] < 4.5

    def test_left_invariance_under_rerooting(self):
        d = poly_dict(2)
        rod = desk_rod()
        q = 0.4 * RNG.normal(size=d.n_q)
        grid = np.linspace(0, 1, 21)
        h = exp_se3(np.array([0.3, -0.2, 0.5, 0.1, 0.0, -0.4]), 1.0)
        plain = forward_kinematics(d, q, rod, grid)
        rooted = forward_kinematics(d, q, rod, grid, base_pose=h)
        for a, b in zip(plain, rooted):
            assert np.allclose((h @ a).matrix, b.matrix, atol=1e-13)

    def test_grid_validation(self):
        d = poly_dict(1)
        rod = desk_rod()
        with pytest.raises(ValidationError):
            forward_kinematics(d, np.zeros(d.n_q), rod, [0.1, 0.5])
        with pytest.raises(ValidationError):
            forward_kinematics(d, np.zeros(d.n_q), rod, [0.0, 0.5, 0.4])


class TestJacobian:
    def test_zero_at_base(self):
        d = poly_dict(2)
        assert np.array_equal(jacobian(d, np.zeros(d.n_q), desk_rod(), 0.0), np.zeros((6, 18)))

    def test_constant_curvature_column_straight_rod(self):
        # At q = 0 the column of the constant kappa_z atom is
        # [0, 0, s, 0, s^2/2, 0] (hand integral with pure translations).
        d = poly_dict(0)
        rod = desk_rod()
        s = 0.7
        col = jacobian(d, np.zeros(d.n_q), rod, s, n_segments=400)[:, d.mode_slice(2).start]
        assert np.allclose(col, [0, 0, s, 0, s * s / 2, 0], atol=1e-6)

    def test_finite_difference_agreement(self):
        d = poly_dict(2)
        rod = desk_rod()
        h = 1e-6
        for _ in range(20):
            q = 0.4 * RNG.normal(size=d.n_q)
            s = RNG.uniform(0.05, 1.0)
            n_seg = max(1, round(40 * s))
            jac = jacobian(d, q, rod, s, n_segments=n_seg)
            grid = np.linspace(0, s, n_seg + 1)
            g0 = forward_kinematics(d, q, rod, grid)[-1]
            g0_inv = g0.inverse().matrix
            fd = np.zeros_like(jac)
            for i in range(d.n_q):
                qp, qm = q.copy(), q.copy()
                qp[i] += h
                qm[i] -= h
                gp = forward_kinematics(d, qp, rod, grid)[-1].matrix
                gm = forward_kinematics(d, qm, rod, grid)[-1].matrix
                dg = g0_inv @ (gp - gm) / (2 * h)
                fd[:, i] = [dg[2, 1], dg[0, 2], dg[1, 0], dg[0, 3], dg[1, 3], dg[2, 3]]
            assert np.abs(jac - fd).max() < 1e-5

    def test_grid_sweep_matches_pointwise(self):
        d = poly_dict(1)
        rod = desk_rod()
        q = 0.3 * RNG.normal(size=d.n_q)
        grid = np.linspace(0, 1, 33)
        sweep = jacobian_on_grid(d, q, rod, grid)
        for idx in (8, 16, 32):
            ref = jacobian(d, q, rod, grid[idx], n_segments=idx)
            assert np.allclose(sweep[idx], ref, atol=1e-12)


class TestStatics:
    def test_zero_input_returns_stress_free(self):
        rod = desk_rod()
        routing = [ActuatorRouting("longitudinal", 0.05)]
        xi, residuals = _static_fixed_point(rod, routing, np.array([0.0]), 0.5, 0.5, 1e-10, 200)
        assert np.array_equal(xi, [0, 0, 0, 1, 0, 0])
        assert len(residuals) == 1  # converged on the first residual check

    def test_centerline_unit_tension(self):
        rod = desk_rod()
        sol = static_strain_solve(rod, [ActuatorRouting("longitudinal", 0.0)], [1.0])
        xi = sol(0.5).vector
        ea = rod.young_modulus * math.pi * rod.base_radius**2
        assert xi[3] == pytest.approx(1.0 + 1.0 / ea, abs=1e-9)
        assert xi[3] == pytest.approx(1.0 + 3.1831e-5, abs=1e-9)
        assert np.allclose(np.delete(xi, 3), 0.0, atol=1e-12)

    def test_helicoidal_patterns(self):
        rod = desk_rod()
        routing = [ActuatorRouting("helicoidal", 0.08, phase=0.0, turns=1.0)]
        sol = static_strain_solve(rod, routing, [1.0])
        s_grid = np.arange(100) * 0.01
        xi = sol.sample(s_grid)
        # twisting and stretch constant along s
        assert np.std(xi[:, 0]) / np.abs(xi[:, 0]).mean() < 1e-3
        assert np.std(xi[:, 3]) / np.abs(xi[:, 3]).mean() < 1e-6
        # bending follows the helix: one full period over the rod
        ky = xi[:, 1]
        spec = np.abs(np.fft.rfft(ky - ky.mean()))
        assert np.argmax(spec) == 1
        # bending and shear about the same axis in phase opposition
        ky_c = ky - ky.mean()
        sy_c = xi[:, 4] - xi[:, 4].mean()
        cosang = (ky_c @ sy_c) / (np.linalg.norm(ky_c) * np.linalg.norm(sy_c))
        assert cosang < -0.999

    def test_residuals_decrease_monotonically(self):
        rod = desk_rod()
        configs = [
            [ActuatorRouting("longitudinal", 0.05, phase=0.4)],
            [ActuatorRouting("helicoidal", 0.08, phase=0.0, turns=2.0)],
            [
                ActuatorRouting("longitudinal", 0.05),
                ActuatorRouting("helicoidal", 0.06, phase=1.0, turns=1.0),
            ],
        ]
        for routing in configs:
            tau = 5.0 * np.ones(len(routing))
            for s in (0.1, 0.5, 0.9):
                _, residuals = _static_fixed_point(rod, routing, tau, s, 0.5, 1e-10, 200)
                diffs = np.diff(residuals)
                assert np.all(diffs <= 1e-15)

    def test_no_convergence_carries_iterate(self):
        rod = desk_rod()
        routing = [ActuatorRouting("helicoidal", 0.08, phase=0.0, turns=1.0)]
        with pytest.raises(NoConvergence) as info:
            _static_fixed_point(rod, routing, np.array([5.0]), 0.5, 1e-3, 1e-10, 3)
        assert info.value.last_iterate is not None
        assert info.value.residual > 0


def unshearable_dict(max_degree=1):
    atoms = family_atoms("polynomial", max_degree)
    return BasisDictionary.from_atoms(1.0, {m: atoms for m in (0, 1, 2, 3)})


def symmetric_longitudinal_routing(offset=0.05):
    return [
        ActuatorRouting("longitudinal", offset, phase=ph)
        for ph in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)
    ]


class TestDynamics:
    OPReM = DynamicsOptions(quadrature_nodes=64)

    def test_equilibrium_acceleration_is_zero(self):
        d = unshearable_dict()
        rod = desk_rod()
        qdd = generalized_dynamics(
            d, rod, symmetric_longitudinal_routing(), np.zeros(6),
            np.zeros(d.n_q), np.zeros(d.n_q), np.zeros(3), self.OPReM,
        )
        assert np.allclose(qdd, 0.0, atol=0)

    def test_mass_matrix_against_jacobian_oracle(self):
        d = unshearable_dict()
        rod = desk_rod()
        q = 0.2 * RNG.normal(size=d.n_q)
        opts = DynamicsOptions(quadrature_nodes=40)
        mass = mass_matrix(d, rod, q, opts)
        from strainwave.rodmodel import inertia_diagonal

        n, ds = 40, 1.0 / 40
        mids = (np.arange(n) + 0.5) * ds
        mdiag = inertia_diagonal(rod, mids)
        oracle = np.zeros_like(mass)
        for k, m in enumerate(mids):
            jac = jacobian(d, q, rod, m, n_segments=2 * k + 1)
            oracle += ds * jac.T @ (mdiag[k][:, None] * jac)
        assert np.abs(mass - oracle).max() / np.abs(oracle).max() < 5e-4

    def test_energy_rate_matches_damping_dissipation(self):
        # dE/dt = -qdot^T D qdot along free damped motion
        d = unshearable_dict()
        rod = desk_rod()
        opts = self.OPReM
        k_q = generalized_stiffness(d, rod, opts)
        d_q = generalized_damping(d, rod, opts)
        q = np.zeros(d.n_q)
        q[d.mode_slice(2).start] = 0.2
        qd = 0.1 * RNG.normal(size=d.n_q)
        qdd = generalized_dynamics(d, rod, [], np.zeros(6), q, qd, np.zeros(0), opts)
        mass = mass_matrix(d, rod, q, opts)
        h = 1e-6
        m_plus = mass_matrix(d, rod, q + h * qd, opts)
        m_minus = mass_matrix(d, rod, q - h * qd, opts)
        mdot = (m_plus - m_minus) / (2 * h)
        e_rate = qd @ mass @ qdd + 0.5 * qd @ mdot @ qd + q @ k_q @ qd
        assert e_rate == pytest.approx(-qd @ d_q @ qd, rel=1e-5)

    def test_linearization_at_equilibrium(self):
        d = unshearable_dict()
        rod = desk_rod()
        opts = self.OPReM
        k_q = generalized_stiffness(d, rod, opts)
        d_q = generalized_damping(d, rod, opts)
        m0 = mass_matrix(d, rod, np.zeros(d.n_q), opts)
        eps = 1e-6
        q = eps * RNG.normal(size=d.n_q)
        qd = eps * RNG.normal(size=d.n_q)
        qdd = generalized_dynamics(d, rod, [], np.zeros(6), q, qd, np.zeros(0), opts)
        linear = -np.linalg.solve(m0, k_q @ q + d_q @ qd)
        assert np.abs(qdd - linear).max() < 1e-4 * max(np.abs(linear).max(), 1e-30) + 1e-9

    def test_settles_to_static_solution(self):
        d = unshearable_dict()
        rod = desk_rod()
        routing = symmetric_longitudinal_routing()
        tau = np.array([40.0, 40.0, 40.0])
        opts = DynamicsOptions(quadrature_nodes=64)
        traj = simulate(
            d, rod, routing, np.zeros(6), np.zeros(d.n_q), np.zeros(d.n_q),
            lambda t: tau, 3.0, 1e-3, opts,
        )
        sol = static_strain_solve(rod, routing, tau)
        s_grid = np.linspace(0, 1, 41)
        xi_dyn = strain_on_grid(d, traj.q[-1], rod, s_grid)
        xi_stat = sol.sample(s_grid)
        rel = np.abs(xi_dyn - xi_stat).max() / np.abs(xi_stat).max()
        assert rel < 1e-6

    def test_zero_input_stays_at_equilibrium(self):
        d = unshearable_dict()
        rod = desk_rod()
        traj = simulate(
            d, rod, [], np.zeros(6), np.zeros(d.n_q), np.zeros(d.n_q),
            None, 0.05, 1e-3, self.OPReM,
        )
        assert np.abs(traj.q).max() == 0.0
        assert np.abs(traj.qdot).max() == 0.0

    def test_energy_non_increasing_free_damped(self):
        d = unshearable_dict()
        rod = desk_rod()
        opts = self.OPReM
        q0 = np.zeros(d.n_q)
        q0[d.mode_slice(1).start] = 0.25
        q0[d.mode_slice(2).start] = -0.2
        traj = simulate(d, rod, [], np.zeros(6), q0, np.zeros(d.n_q), None, 1.0, 1e-3, opts)
        k_q = generalized_stiffness(d, rod, opts)
        energy = np.array(
            [
                0.5 * qd @ mass_matrix(d, rod, q, opts) @ qd + 0.5 * q @ k_q @ q
                for q, qd in zip(traj.q[::5], traj.qdot[::5])
            ]
        )
        assert np.diff(energy).max() <= 1e-8 * energy[0]
        assert energy[-1] < energy[0]

    def test_rk4_order_four_convergence(self):
        # Bending-only dictionary keeps the spectrum soft enough that the
        # dt^4 error sits well above the Coriolis finite-difference noise.
        atoms = family_atoms("polynomial", 1)
        d = BasisDictionary.from_atoms(1.0, {m: atoms for m in (1, 2)})
        rod = desk_rod()
        opts = DynamicsOptions(quadrature_nodes=32)
        q0 = np.zeros(d.n_q)
        q0[d.mode_slice(2).start] = 0.5
        q0[d.mode_slice(1).start] = -0.3

        def final_q(dt):
            return simulate(d, rod, [], np.zeros(6), q0, np.zeros(d.n_q), None, 0.32, dt, opts).q[-1]

        ref = final_q(1e-3)
        e1 = np.linalg.norm(final_q(1.6e-2) - ref)
        e2 = np.linalg.norm(final_q(8e-3) - ref)
        # halving dt divides the O(dt^4) error by ~16
        assert 10.0 < e1 / e2 < 24.0

    def test_mass_condition_guard(self):
        d = unshearable_dict()
        rod = desk_rod()
        with pytest.raises(SingularMass):
            generalized_dynamics(
                d, rod, [], np.zeros(6), np.zeros(d.n_q), np.zeros(d.n_q), np.zeros(0),
                DynamicsOptions(quadrature_nodes=32, mass_condition_limit=10.0),
            )

    def test_degenerate_tangent_propagates(self):
        d = unshearable_dict()
        rod = desk_rod(stress_free_strain=(0.0,) * 6)
        with pytest.raises(DegenerateTangent):
            generalized_dynamics(
                d, rod, [ActuatorRouting("longitudinal", 0.0)], np.zeros(6),
                np.zeros(d.n_q), np.zeros(d.n_q), [1.0], self.OPReM,
            )

    def test_simulate_validation(self):
        d = unshearable_dict()
        rod = desk_rod()
        with pytest.raises(ValidationError):
            simulate(d, rod, [], np.zeros(6), np.zeros(d.n_q), np.zeros(d.n_q), None, 1.0, 0.0)
        with pytest.raises(ValidationError):
            simulate(d, rod, [], np.zeros(6), np.zeros(d.n_q), np.zeros(d.n_q), None, 1e-4, 1e-3)


class TestMixedDerivativeIdentity:
    def test_identity_along_trajectory(self):
        # eta' from spatial differences equals xid - ad_xi eta from time
        # differences along a simulated trajectory (continuum identity).
        d = unshearable_dict()
        rod = desk_rod()
        routing = symmetric_longitudinal_routing(0.06)
        opts = DynamicsOptions(quadrature_nodes=64)
        amp = np.array([20.0, 12.0, 16.0])

        def tau_fn(t):
            return amp * (1.0 - math.cos(2 * math.pi * t / 0.4)) / 2.0

        dt = 1e-3
        traj = simulate(d, rod, routing, np.zeros(6), np.zeros(d.n_q), np.zeros(d.n_q),
                        tau_fn, 0.401, dt, opts)
        frames = np.arange(0, 400, 4)  # 100 samples at 4 ms spacing
        s_grid = np.linspace(0, 1, 100)
        xi = np.stack([strain_on_grid(d, traj.q[m], rod, s_grid) for m in frames])
        eta = np.stack(
            [
                np.einsum("nij,j->ni", jacobian_on_grid(d, traj.q[m], rod, s_grid), traj.qdot[m])
                for m in frames
            ]
        )
        dt_frame = 4 * dt
        ds = s_grid[1] - s_grid[0]
        # interior central differences
        eta_prime = (eta[:, 2:, :] - eta[:, :-2, :]) / (2 * ds)
        xi_dot = (xi[2:, :, :] - xi[:-2, :, :]) / (2 * dt_frame)
        lhs = eta_prime[1:-1]
        rhs = np.empty_like(lhs)
        for a, m in enumerate(range(1, len(frames) - 1)):
            for b, n in enumerate(range(1, len(s_grid) - 1)):
                rhs[a, b] = xi_dot[a, n] - adjoint_small(xi[m, n]) @ eta[m, n]
        scale = np.abs(rhs).max()
        assert np.abs(lhs - rhs).max() / scale < 1e-3


class TestProjectionMatrices:
    def test_stiffness_damping_definite(self):
        rod = desk_rod()
        d = poly_dict(1)
        k_q = generalized_stiffness(d, rod)
        d_q = generalized_damping(d, rod)
        assert np.allclose(k_q, k_q.T, atol=0)
        assert np.allclose(d_q, d_q.T, atol=0)
        # every mode holds atoms: both projections are positive definite
        assert np.linalg.eigvalsh(k_q).min() > 0
        assert np.linalg.eigvalsh(d_q).min() > 0

    def test_semidefinite_with_empty_modes(self):
        rod = desk_rod()
        d = BasisDictionary.from_atoms(1.0, {2: family_atoms("polynomial", 1)})
        k_q = generalized_stiffness(d, rod)
        assert np.linalg.eigvalsh(k_q).min() > 0  # restricted block still PD


class TestActuationInformedAtoms:
    def test_static_profiles_become_atoms(self):
        from strainwave.gvs import TabulatedAtom, actuation_informed_atoms

        rod = desk_rod()
        routing = [ActuatorRouting("helicoidal", 0.08, phase=0.0, turns=1.0)]
        atoms = actuation_informed_atoms(rod, routing, n_samples=81)
        # the helicoidal actuator excites twist, bending, stretch and shear
        assert set(atoms) == {0, 1, 2, 3, 4, 5}
        d = BasisDictionary.from_atoms(1.0, atoms)
        # a single coordinate per mode reproduces the static field
        solution = static_strain_solve(rod, routing, [1.0])
        s_check = np.linspace(0, 1, 81)
        xi = solution.sample(s_check) - rod.stress_free_on(s_check)
        model = np.zeros_like(xi)
        vals = d.atom_values(s_check)
        modes = d.column_modes
        for j in range(d.n_q):
            model[:, modes[j]] += vals[:, j]
        assert np.abs(model - xi).max() < 1e-9

    def test_tabulated_atom_l2_matches_quadrature(self):
        from strainwave.gvs import TabulatedAtom

        s = np.linspace(0, 1, 9)
        atom = TabulatedAtom(tuple(s), tuple(np.sin(2 * s) + 0.3), name="probe")
        fine = np.linspace(0, 1, 20001)
        numeric = np.trapezoid(atom.evaluate(fine, 1.0) ** 2, fine)
        assert atom.l2_integral(1.0) == pytest.approx(numeric, rel=1e-6)


class TestGravityDynamics:
    def test_gravity_projection_against_jacobian_oracle(self):
        # f_grav = int J^T M Ad_g^-1 G ds, rebuilt from the public jacobian
        # and forward kinematics on the same quadrature grid
        from strainwave.liealg import adjoint_big
        from strainwave.rodmodel import inertia_diagonal

        rod = desk_rod()
        d = unshearable_dict()
        gravity = np.array([0, 0, 0, 0, 0, -9.81])
        opts = DynamicsOptions(quadrature_nodes=100)
        q = 0.15 * RNG.normal(size=d.n_q)
        qdd = generalized_dynamics(d, rod, [], gravity, q, np.zeros(d.n_q), np.zeros(0), opts)
        k_q = generalized_stiffness(d, rod, opts)
        grav_engine = mass_matrix(d, rod, q, opts) @ qdd + k_q @ q
        n, ds = 100, rod.length / 100
        mids = (np.arange(n) + 0.5) * ds
        mdiag = inertia_diagonal(rod, mids)
        grav_oracle = np.zeros(d.n_q)
        grid = np.concatenate([[0.0], mids])
        poses = forward_kinematics(d, q, rod, grid)
        for k in range(n):
            jac = jacobian(d, q, rod, mids[k], n_segments=2 * k + 1)
            wrench = mdiag[k] * (adjoint_big(poses[k + 1].inverse()) @ gravity)
            grav_oracle += ds * jac.T @ wrench
        scale = np.abs(grav_oracle).max()
        assert np.abs(grav_engine - grav_oracle).max() / scale < 1e-3

    def test_rod_sags_with_gravity(self):
        rod = desk_rod()
        d = unshearable_dict()
        gravity = np.array([0, 0, 0, 0, 0, -9.81])
        opts = DynamicsOptions(quadrature_nodes=48)
        traj = simulate(d, rod, [], gravity, np.zeros(d.n_q), np.zeros(d.n_q),
                        None, 0.5, 1e-3, opts)
        tip = forward_kinematics(d, traj.q[-1], rod, np.linspace(0, 1, 51))[-1]
        assert tip.position[2] < -1e-4  # horizontal rod droops toward -z
