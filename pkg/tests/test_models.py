from __future__ import annotations

import numpy as np
import pytest

from conftest import memory_pack, unit_rows
from ockr.errors import PackFormatError, PreconditionError, ProtocolError
from ockr.featurestore import FeaturePack, ViewId
from ockr.models import (
    GLOBAL_CLIENT_ID,
    MODE_CLIENT_INDEPENDENT,
    ModelBundle,
    load_bundle,
    save_bundle,
    train_client,
)
from ockr.regression import SparseSolution
from ockr.scoring import score_frame

VIEWS = ("R1_N1", "R2_N1")


def bona_pack(clients=("c1",), frames=5, views=VIEWS, dim=6, seed=0) -> FeaturePack:
    spec = [
        (c, f"v{f // 5:02d}", f % 5, "bonafide", None)
        for c in clients
        for f in range(frames)
    ]
    return memory_pack(spec, views=views, dim=dim, seed=seed)


def training_frame(pack: FeaturePack, model, i: int) -> dict:
    return {v: pack.views[v][i] for v in model.views}


class TestTrainClient:
    def test_full_cardinality_interpolates(self):
        pack = bona_pack(frames=5)
        model = train_client(pack, "c1", target_nnz=5)
        assert model.nnz == 5
        assert all(model.support[v].shape == (5, 6) for v in model.views)
        for i in range(5):
            assert score_frame(model, training_frame(pack, model, i)) == pytest.approx(
                1.0, abs=1e-6
            )

    def test_sparse_support_retained_only(self):
        pack = bona_pack(frames=26, seed=3)
        model = train_client(pack, "c1", target_nnz=2)
        assert model.nnz == 2
        assert all(model.support[v].shape[0] == 2 for v in model.views)
        assert model.kernel_evaluations_per_frame() == 2 * len(VIEWS)

    def test_client_independent_pools_rows(self):
        pack = bona_pack(clients=("c1", "c2", "c3"), frames=4, seed=1)
        model = train_client(pack, None, target_nnz=3, mode=MODE_CLIENT_INDEPENDENT)
        assert model.client_id == GLOBAL_CLIENT_ID
        assert model.provenance["n_train"] == 12

    def test_attack_rows_are_protocol_violation(self):
        spec = [("c1", "v1", i, "bonafide", None) for i in range(4)]
        spec.append(("c1", "v2", 0, "attack", "print"))
        pack = memory_pack(spec, views=VIEWS, dim=6)
        with pytest.raises(ProtocolError):
            train_client(pack, "c1", target_nnz=2)

    def test_training_purity_recorded_in_provenance(self):
        pack = bona_pack(frames=6, seed=5)
        model = train_client(pack, "c1", target_nnz=3)
        assert all(key[3] == "bonafide" for key in model.provenance["row_keys"])

    def test_too_few_rows(self):
        spec = [("c1", "v1", 0, "bonafide", None)]
        with pytest.raises(PreconditionError):
            train_client(memory_pack(spec, views=VIEWS, dim=6), "c1", target_nnz=1)

    def test_unknown_mode(self):
        with pytest.raises(PreconditionError):
            train_client(bona_pack(), "c1", target_nnz=2, mode="bogus")

    def test_client_isolation(self):
        spec_a = [("c1", "v1", i, "bonafide", None) for i in range(5)]
        spec_b = [("c2", "v1", i, "bonafide", None) for i in range(5)]
        pack = memory_pack(spec_a + spec_b, views=VIEWS, dim=6, seed=9)
        model = train_client(pack, "c1", target_nnz=3)

        perturbed = FeaturePack(
            rows=pack.rows,
            views={
                v: np.where(
                    np.array([m.client_id == "c2" for m in pack.rows])[:, None],
                    unit_rows(np.random.default_rng(77), len(pack.rows), 6),
                    pack.views[v],
                )
                for v in pack.views
            },
        )
        retrained = train_client(perturbed, "c1", target_nnz=3)
        assert np.array_equal(model.alpha_values, retrained.alpha_values)
        assert np.array_equal(model.alpha_indices, retrained.alpha_indices)
        for v in model.views:
            assert np.array_equal(model.support[v], retrained.support[v])
            assert model.config.theta(v) == retrained.config.theta(v)

    def test_support_minimality(self):
        pack = bona_pack(frames=20, seed=2)
        for target in (1, 3, 7, 20):
            model = train_client(pack, "c1", target_nnz=target)
            assert model.nnz <= target
            assert model.nnz == model.alpha_values.shape[0]

    def test_views_filter(self):
        pack = bona_pack(frames=6, seed=4)
        only = ViewId("R1", "N1")
        model = train_client(pack, "c1", target_nnz=2, views=[only])
        assert model.views == (only,)

    def test_shortfall_warning(self, monkeypatch):
        pack = bona_pack(frames=5, seed=6)
        short = SparseSolution(
            indices=np.array([0]), values=np.array([0.9]), delta=0.1, nnz=1, shortfall=True
        )
        monkeypatch.setattr("ockr.models.solve_lars_path", lambda *a, **k: short)
        with pytest.warns(UserWarning, match="nnz=1 < target 4"):
            model = train_client(pack, "c1", target_nnz=4)
        assert model.provenance["nnz_shortfall"] is True


class TestBundleRoundTrip:
    def test_scores_identical_after_round_trip(self, tmp_path, rng):
        pack = bona_pack(clients=("c1", "c2"), frames=6, seed=8)
        bundle = ModelBundle()
        for cid in ("c1", "c2"):
            bundle.models[cid] = train_client(pack, cid, target_nnz=3)
        probe = {v: unit_rows(rng, 1, 6)[0] for v in bundle.models["c1"].views}

        before = {cid: score_frame(m, probe) for cid, m in bundle.models.items()}
        path = tmp_path / "bundle.ockrmodel.json"
        save_bundle(bundle, path)
        loaded = load_bundle(path)
        after = {cid: score_frame(loaded[cid], probe) for cid in loaded.models}
        assert before == after  # zero-ulp: hex round trip is bit exact

    def test_alpha_and_support_bit_exact(self, tmp_path):
        pack = bona_pack(frames=7, seed=11)
        bundle = ModelBundle(models={"c1": train_client(pack, "c1", target_nnz=4)})
        save_bundle(bundle, tmp_path / "b.json")
        loaded = load_bundle(tmp_path / "b.json")
        m0, m1 = bundle.models["c1"], loaded["c1"]
        assert np.array_equal(m0.alpha_values, m1.alpha_values)
        assert np.array_equal(m0.alpha_indices, m1.alpha_indices)
        for v in m0.views:
            assert np.array_equal(m0.support[v], m1.support[v])
            assert m0.config.theta(v) == m1.config.theta(v)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"magic": "NOPE", "version": 1, "models": {}}')
        with pytest.raises(PackFormatError, match="magic"):
            load_bundle(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"magic": "OCKR-BUNDLE", "version": 99, "models": {}}')
        with pytest.raises(PackFormatError, match="version"):
            load_bundle(path)

    def test_digest_mismatch_warns(self, tmp_path):
        pack = bona_pack(frames=5, seed=13)
        bundle = ModelBundle(models={"c1": train_client(pack, "c1", target_nnz=2)})
        path = tmp_path / "b.json"
        save_bundle(bundle, path)
        doc = path.read_text().replace('"jitter": 0.0', '"jitter": 0.5')
        path.write_text(doc)
        with pytest.warns(UserWarning, match="digest mismatch"):
            load_bundle(path)

    def test_forty_clients_retrievable(self, tmp_path):
        clients = tuple(f"c{i:02d}" for i in range(40))
        pack = bona_pack(clients=clients, frames=4, seed=21)
        bundle = ModelBundle()
        for cid in clients:
            bundle.models[cid] = train_client(pack, cid, target_nnz=2)
        path = tmp_path / "big.json"
        save_bundle(bundle, path)
        loaded = load_bundle(path)
        assert len(loaded) == 40
        for cid in clients:
            assert loaded[cid].client_id == cid

    def test_missing_client_raises(self):
        bundle = ModelBundle()
        with pytest.raises(PreconditionError, match="no model for client"):
            bundle["ghost"]
