"""Tests for nullspace, regularized, ablation, and partial projections."""

import numpy as np
import pytest

from ccup import (
    ComponentConfigError,
    DegenerateFeatureError,
    EmbeddingMatrix,
    RegularizationConfig,
    ablation_matrix,
    apply_projection,
    ccup_matrix,
    gradient,
    load_projection,
    nullspace_projector,
    objective,
    partial_projector,
    save_projection,
)
from helpers import unit_columns, unit_matrix

E1 = np.array([[1.0], [0.0]])
E2 = np.array([[0.0], [1.0]])


class TestNullspaceProjector:
    def test_axis_aligned(self):
        proj = nullspace_projector(E1)
        assert np.allclose(proj.values, [[0.0, 0.0], [0.0, 1.0]], atol=1e-15)

    def test_duplicated_columns_match_single(self):
        rng = np.random.default_rng(8)
        col = unit_columns(rng, 12, 1)
        single = nullspace_projector(col)
        doubled = nullspace_projector(np.hstack([col, col]))
        assert np.linalg.norm(doubled.values - single.values) <= 1e-8

    def test_annihilation_idempotence_symmetry(self):
        rng = np.random.default_rng(21)
        for _ in range(5):
            cols = unit_columns(rng, 16, 4)
            p = nullspace_projector(cols).values
            assert np.max(np.abs(p @ cols)) <= 1e-10
            assert np.linalg.norm(p @ p - p) <= 1e-10
            assert np.linalg.norm(p - p.T) <= 1e-10

    def test_gram_and_basis_agree(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            cols = unit_columns(rng, 24, 5)
            gram_sv = np.linalg.svd(cols, compute_uv=False)
            assert (gram_sv[0] / gram_sv[-1]) ** 2 <= 1e6  # precondition
            via_gram = nullspace_projector(cols, construction="gram").values
            via_basis = nullspace_projector(cols, construction="basis").values
            assert np.linalg.norm(via_gram - via_basis) <= 1e-8

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            nullspace_projector(np.empty((4, 0)))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            nullspace_projector(np.array([[np.inf], [0.0]]))

    def test_unknown_construction(self):
        with pytest.raises(ValueError, match="construction"):
            nullspace_projector(E1, construction="qr")


class TestCcupMatrix:
    def test_lambda_zero_is_exact_identity(self):
        rng = np.random.default_rng(4)
        forget = unit_matrix(rng, 10, 3)
        retain = unit_matrix(rng, 10, 4)
        proj = ccup_matrix(forget, retain, RegularizationConfig(lam=0.0, mu=5.0))
        assert np.array_equal(proj.values, np.eye(10))

    def test_axis_aligned_diagonal(self):
        proj = ccup_matrix(E1, E2, RegularizationConfig(lam=100.0, mu=1.0))
        assert np.allclose(proj.values, np.diag([1.0 / 101.0, 1.0]), atol=1e-12)

    def test_large_lambda_approaches_nullspace(self):
        rng = np.random.default_rng(9)
        forget = unit_columns(rng, 32, 5)
        retain = np.empty((32, 0))
        w = ccup_matrix(forget, retain, RegularizationConfig(lam=1e6, mu=0.0))
        p = nullspace_projector(forget)
        assert np.linalg.norm(w.values - p.values) <= 1e-4

    @pytest.mark.filterwarnings("ignore:lam = 0 and mu = 0")
    def test_closed_form_is_stationary(self):
        rng = np.random.default_rng(14)
        for lam in (0.0, 1.0, 100.0):
            for mu in (0.0, 1.0, 100.0):
                forget = unit_columns(rng, 12, 3)
                retain = unit_columns(rng, 12, 4)
                config = RegularizationConfig(lam=lam, mu=mu)
                w = ccup_matrix(forget, retain, config)
                grad = gradient(w, forget, retain, config)
                assert np.linalg.norm(grad) <= 1e-8 * (1.0 + lam + mu)

    def test_suppression_monotone_in_lambda(self):
        # Orthogonal forget/retain spans; a unit vector in the forget
        # span must shrink monotonically as lambda grows.
        rng = np.random.default_rng(17)
        basis = np.linalg.qr(rng.standard_normal((20, 8)))[0]
        forget = basis[:, :4]
        retain = basis[:, 4:]
        weights = rng.standard_normal(4)
        u = forget @ weights
        u /= np.linalg.norm(u)
        previous = np.inf
        for lam in (0.0, 0.5, 1.0, 5.0, 50.0, 1000.0):
            w = ccup_matrix(forget, retain, RegularizationConfig(lam=lam, mu=1.0))
            norm = float(np.linalg.norm(w.values @ u))
            assert norm <= previous + 1e-12
            previous = norm

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            ccup_matrix(E1, np.zeros((3, 1)), RegularizationConfig())

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            RegularizationConfig(lam=-1.0)

    def test_nonfinite_mu_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            RegularizationConfig(mu=np.nan)

    def test_empty_retain_allowed(self):
        rng = np.random.default_rng(23)
        forget = unit_columns(rng, 8, 2)
        w = ccup_matrix(forget, np.empty((8, 0)), RegularizationConfig(lam=10.0, mu=1.0))
        ref = ccup_matrix(forget, np.empty((8, 0)), RegularizationConfig(lam=10.0, mu=0.0))
        assert np.allclose(w.values, ref.values, atol=1e-12)

    def test_identity_configuration_warns(self):
        with pytest.warns(UserWarning, match="identity"):
            ccup_matrix(E1, E2, RegularizationConfig(lam=0.0, mu=0.0))


class TestAblationMatrix:
    def test_full_set_equals_closed_form(self):
        rng = np.random.default_rng(5)
        forget = unit_matrix(rng, 10, 3)
        retain = unit_matrix(rng, 10, 4)
        config = RegularizationConfig(lam=100.0, mu=1.0)
        full = ablation_matrix(forget, retain, config, {"C1", "C2", "C3"})
        closed = ccup_matrix(forget, retain, config)
        assert np.max(np.abs(full.values - closed.values)) <= 1e-12

    def test_identity_plus_forgetting_diagonal(self):
        proj = ablation_matrix(E1, E2, RegularizationConfig(lam=100.0, mu=1.0), {"C1", "C2"})
        assert np.allclose(proj.values, np.diag([1.0 / 101.0, 1.0]), atol=1e-12)

    def test_forgetting_plus_retention_is_local_minimum(self):
        rng = np.random.default_rng(29)
        forget = unit_columns(rng, 16, 3)
        retain = unit_columns(rng, 16, 5)
        config = RegularizationConfig(lam=10.0, mu=2.0)
        w = ablation_matrix(forget, retain, config, {"C2", "C3"}).values

        def partial_objective(candidate):
            value = objective(candidate, forget, retain, config)
            return value.forget_term + value.retain_term

        at_solution = partial_objective(w)
        for _ in range(1000):
            delta = rng.standard_normal(w.shape)
            assert at_solution <= partial_objective(w + 1e-3 * delta) + 1e-12

    def test_missing_forgetting_term_rejected(self):
        with pytest.raises(ComponentConfigError, match="C2"):
            ablation_matrix(E1, E2, RegularizationConfig(), {"C1", "C3"})

    def test_unknown_component_rejected(self):
        with pytest.raises(ComponentConfigError, match="C9"):
            ablation_matrix(E1, E2, RegularizationConfig(), {"C2", "C9"})


class TestPartialProjector:
    def test_alpha_zero_is_identity(self):
        proj = partial_projector(E1, alpha=0.0)
        assert np.array_equal(proj.values, np.eye(2))

    def test_alpha_one_matches_nullspace(self):
        rng = np.random.default_rng(6)
        cols = unit_columns(rng, 12, 3)
        assert np.max(np.abs(
            partial_projector(cols, alpha=1.0).values
            - nullspace_projector(cols).values
        )) <= 1e-12

    def test_half_strength_axis(self):
        proj = partial_projector(E1, alpha=0.5)
        out = proj.values @ np.array([1.0, 0.0])
        assert np.allclose(out, [0.5, 0.0], atol=1e-15)

    def test_span_norm_is_one_minus_alpha(self):
        rng = np.random.default_rng(19)
        cols = unit_columns(rng, 10, 4)
        weights = rng.standard_normal(4)
        u = cols @ weights
        u /= np.linalg.norm(u)
        for alpha in (0.0, 0.25, 0.7, 1.0):
            norm = np.linalg.norm(partial_projector(cols, alpha).values @ u)
            assert abs(norm - (1.0 - alpha)) <= 1e-9

    @pytest.mark.parametrize("alpha", [-0.1, 1.5, np.nan])
    def test_alpha_out_of_range(self, alpha):
        with pytest.raises(ValueError, match="alpha"):
            partial_projector(E1, alpha=alpha)


class TestApplyProjection:
    def test_identity_keeps_unit_features(self):
        rng = np.random.default_rng(3)
        features = unit_matrix(rng, 6, 4)
        proj = partial_projector(unit_columns(rng, 6, 1), alpha=0.0)
        out = apply_projection(proj, features)
        assert np.allclose(out.values, features.values, atol=1e-12)

    def test_axis_erasure_then_renormalize(self):
        proj = nullspace_projector(E1)
        features = EmbeddingMatrix(2, 1, np.array([[0.6], [0.8]]))
        out = apply_projection(proj, features)
        assert np.allclose(out.values[:, 0], [0.0, 1.0], atol=1e-12)
        assert out.normalized

    def test_fully_erased_feature_is_an_error(self):
        proj = nullspace_projector(E1)
        features = EmbeddingMatrix(2, 2, np.array([[1.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(DegenerateFeatureError) as excinfo:
            apply_projection(proj, features)
        assert excinfo.value.indices == [0]

    def test_output_columns_unit_norm(self):
        rng = np.random.default_rng(33)
        features = unit_matrix(rng, 24, 40)
        proj = ccup_matrix(
            unit_columns(rng, 24, 4),
            unit_columns(rng, 24, 6),
            RegularizationConfig(lam=100.0, mu=1.0),
        )
        out = apply_projection(proj, features)
        norms = np.linalg.norm(out.values, axis=0)
        assert np.max(np.abs(norms - 1.0)) <= 1e-10

    def test_dimension_mismatch(self):
        proj = nullspace_projector(E1)
        features = unit_matrix(np.random.default_rng(0), 3, 2)
        with pytest.raises(ValueError, match="dim"):
            apply_projection(proj, features)


class TestProjectionSerialization:
    def test_roundtrip_values_and_provenance(self, tmp_path):
        rng = np.random.default_rng(41)
        proj = ccup_matrix(
            unit_columns(rng, 8, 2),
            unit_columns(rng, 8, 3),
            RegularizationConfig(lam=100.0, mu=1.0),
        )
        path = tmp_path / "w.emb1"
        save_projection(proj, path)
        back = load_projection(path)
        assert back.provenance == proj.provenance
        # Payload is float32, so values survive at single precision.
        assert np.max(np.abs(back.values - proj.values)) <= 1e-6

    def test_missing_provenance_sidecar(self, tmp_path):
        rng = np.random.default_rng(41)
        proj = nullspace_projector(unit_columns(rng, 4, 1))
        path = tmp_path / "w.emb1"
        save_projection(proj, path)
        (tmp_path / "w.provenance.json").unlink()
        with pytest.raises(FileNotFoundError, match="provenance"):
            load_projection(path)

    def test_non_square_container_rejected(self, tmp_path):
        from ccup import write_emb1

        rng = np.random.default_rng(2)
        write_emb1(unit_matrix(rng, 4, 2), tmp_path / "w.emb1")
        (tmp_path / "w.provenance.json").write_text('{"method": "ccup"}')
        with pytest.raises(ValueError, match="square"):
            load_projection(tmp_path / "w.emb1")
