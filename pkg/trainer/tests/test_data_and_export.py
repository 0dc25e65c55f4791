import json

import numpy as np
import pytest
import torch

from agepop_trainer.data import (
    DatasetError,
    Record,
    class_digest,
        featurize,
    load_records,
    split_indices,
)
from agepop_trainer.export import (
    bake_normalization,
    dense_to_layers,
    evaluate_exported,
    write_model,
)
from agepop_trainer.networks import ReferenceFNO, build_dense


class TestData:
    def test_load_rejects_bad_schema(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"max_age": 1.0, "k": [1, 2]}\n')
        with pytest.raises(DatasetError):
            load_records(path)
        path.write_text("")
        with pytest.raises(DatasetError):
            load_records(path)

    def test_load_roundtrip(self, tmp_path):
        path = tmp_path / "ok.jsonl"
        rec = {"max_age": 1.0, "k": [1.0, 2.0, 1.5], "mu": [0.1, 0.2, 0.3],
               "zeta": 0.8, "r0": 1.4}
        path.write_text(json.dumps(rec) + "\n")
        records = load_records(path)
        assert len(records) == 1
        assert records[0].zeta == 0.8
        np.testing.assert_array_equal(records[0].k, [1.0, 2.0, 1.5])

    def test_featurize_constant_exact(self):
        rec = Record(max_age=1.0, k=np.full(11, 2.5), mu=np.full(11, 0.3),
                     zeta=1.0, r0=1.5)
        feats = featurize(rec, 64)
        np.testing.assert_allclose(feats[:64], 2.5)
        np.testing.assert_allclose(feats[64:], 0.3)

    def test_featurize_linear_exact(self):
        # piecewise-linear resampling reproduces linear profiles exactly
        src = np.linspace(0, 1, 21)
        rec = Record(max_age=1.0, k=3.0 * src, mu=src, zeta=1.0, r0=1.5)
        feats = featurize(rec, 64)
        tgt = np.linspace(0, 1, 64)
        np.testing.assert_allclose(feats[:64], 3.0 * tgt, atol=1e-14)

    def test_split_disjoint_and_deterministic(self):
        tr1, va1 = split_indices(100, 0.1, seed=3)
        tr2, va2 = split_indices(100, 0.1, seed=3)
        np.testing.assert_array_equal(tr1, tr2)
        np.testing.assert_array_equal(va1, va2)
        assert set(tr1).isdisjoint(va1)
        assert len(tr1) + len(va1) == 100

    def test_digest_stable(self):
        recs = [
            Record(1.0, np.full(8, 1.0 + i / 10), np.full(8, 0.1), 1.0, 1.3)
            for i in range(3)
        ]
        assert class_digest(recs) == class_digest(recs)
        assert len(class_digest(recs)) == 16


class TestExport:
    def test_dense_layers_roundtrip_values(self):
        net = build_dense(8, hidden=(5,), activation="tanh", seed=1)
        layers = dense_to_layers(net)
        assert [l["activation"] for l in layers] == ["tanh", "identity"]
        x = np.random.default_rng(0).normal(size=(3, 8))
        with torch.no_grad():
            want = net(torch.tensor(x)).numpy()[:, 0]
        got = evaluate_exported(layers, x)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_baked_normalization_matches_standardized_net(self):
        rng = np.random.default_rng(7)
        net = build_dense(6, hidden=(4,), activation="gelu", seed=2)
        x = rng.normal(size=(5, 6)) * 3.0 + 1.0
        xm, xs = x.mean(0), x.std(0) + 1e-12
        ym, ys = 0.9, 0.2
        with torch.no_grad():
            std_out = net(torch.tensor((x - xm) / xs)).numpy()[:, 0] * ys + ym
        baked = bake_normalization(dense_to_layers(net), xm, xs, ym, ys)
        got = evaluate_exported(baked, x)
        np.testing.assert_allclose(got, std_out, atol=1e-10)

    def test_written_file_is_v1_schema(self, tmp_path):
        net = build_dense(16, hidden=(4,), seed=0)
        layers = dense_to_layers(net)
        path = tmp_path / "m.model.json"
        write_model(path, layers, grid_size=8, max_age=1.0, metadata={"train_mse": 0.0})
        doc = json.loads(path.read_text())
        assert doc["version"] == "v1"
        assert doc["grid_size"] == 8
        assert doc["layers"][0]["cols"] == 16
        assert doc["layers"][-1]["rows"] == 1
        assert set(doc["layers"][0]) == {
            "rows", "cols", "weight_b64", "bias_b64", "activation"
        }


class TestNetworks:
    def test_fno_output_shape(self):
        model = ReferenceFNO(grid_size=32, width=16, modes=8, n_layers=2, seed=0)
        feats = torch.randn(4, 64, dtype=torch.float64)
        out = model(feats)
        assert out.shape == (4, 1)
        assert out.dtype == torch.float64
