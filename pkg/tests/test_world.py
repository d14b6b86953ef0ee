import json

import numpy as np
import pytest

from activevpr.pdv import normalize, uniform
from activevpr.world import (
    Domain,
    TRAIN_DOMAIN,
    WorldConfig,
    WorldConfigError,
    descriptor,
    expected_observation,
    featureless_prototype,
    generate_world,
    load_pdv_table,
    load_world,
    observe,
    save_world,
    world_from_dict,
    world_to_dict,
)
from conftest import identity_world, make_world


class TestGeneration:
    def test_place_partitioning_400_25(self):
        w = generate_world(WorldConfig(n_viewpoints=400, place_len_m=25), seed=0)
        assert w.n_places == 16
        assert w.place_of[0] == 0
        assert w.place_of[399] == 15

    def test_single_class_edge(self):
        w = generate_world(WorldConfig(n_viewpoints=100, place_len_m=100,
                                       featureless_run_min_m=10,
                                       featureless_run_max_m=20), seed=3)
        assert w.n_places == 1

    def test_determinism(self):
        cfg = WorldConfig()
        assert generate_world(cfg, 42) == generate_world(cfg, 42)
        assert generate_world(cfg, 42) != generate_world(cfg, 43)

    def test_contiguous_nondecreasing_place_map(self):
        w = generate_world(WorldConfig(n_viewpoints=137, place_len_m=11), seed=5)
        steps = np.diff(w.place_of)
        assert np.all((steps == 0) | (steps == 1))
        assert np.all(w.place_counts > 0)

    def test_featureless_runs_are_contiguous(self):
        cfg = WorldConfig(featureless_fraction=0.3)
        w = generate_world(cfg, 11)
        f = w.featureless > 0
        frac = f.mean()
        assert 0.2 <= frac <= 0.4
        # count maximal runs and their lengths
        edges = np.flatnonzero(np.diff(np.concatenate([[0], f.astype(int), [0]])))
        runs = edges.reshape(-1, 2)
        assert len(runs) >= 1
        # all runs are long; only the last placed run may be trimmed to hit
        # the target fraction, so at most one can fall below the minimum
        lengths = sorted(hi - lo for lo, hi in runs)
        assert all(l >= 40 for l in lengths[1:])
        assert lengths[0] >= 5

    def test_invalid_config(self):
        with pytest.raises(WorldConfigError):
            WorldConfig(n_viewpoints=0)
        with pytest.raises(WorldConfigError):
            WorldConfig(place_len_m=0)


class TestObserve:
    def test_identity_confusion_is_delta(self):
        w = identity_world(n=20, place_len=5)
        rng = np.random.default_rng(0)
        pdv = observe(w, 17, TRAIN_DOMAIN, rng)
        expected = np.zeros(4)
        expected[3] = 1.0
        np.testing.assert_array_equal(pdv, expected)

    def test_fully_featureless_is_uniform(self):
        w = identity_world(n=20, place_len=5, featureless=np.ones(20))
        rng = np.random.default_rng(0)
        np.testing.assert_allclose(observe(w, 3, TRAIN_DOMAIN, rng), uniform(4))

    def test_shift_zero_returns_confusion_row(self):
        w = make_world(n=20, place_len=5, diag=0.7)
        rng = np.random.default_rng(0)
        np.testing.assert_array_equal(
            observe(w, 8, TRAIN_DOMAIN, rng), w.confusion[w.place_of[8]]
        )

    def test_valid_pdv_under_shift(self, rng):
        w = make_world(n=20, place_len=5, diag=0.8)
        d = Domain("shifted", shift_strength=0.5, seed=1)
        for _ in range(200):
            pdv = observe(w, int(rng.integers(0, 20)), d, rng)
            assert abs(pdv.sum() - 1.0) < 1e-9
            assert np.all(pdv >= 0)

    def test_shifted_argmax_matches_blend_formula_monte_carlo(self):
        # diag >= 0.8: over many draws the argmax should still be dominated by
        # the true class, and the mean report should approach the analytic
        # noise-free blend (gamma noise has unit-mean after normalization only
        # asymptotically, so allow a loose tolerance driven by 1e4 draws).
        w = make_world(n=20, place_len=5, diag=0.8)
        d = Domain("shifted", shift_strength=0.5, seed=1)
        rng = np.random.default_rng(7)
        v = 12
        true_c = w.place_of[v]
        draws = np.stack([observe(w, v, d, rng) for _ in range(10_000)])
        assert np.argmax(draws.mean(axis=0)) == true_c
        argmax_rate = np.mean(np.argmax(draws, axis=1) == true_c)
        assert argmax_rate > 0.9

    def test_out_of_range(self):
        w = identity_world()
        with pytest.raises(IndexError):
            observe(w, 99, TRAIN_DOMAIN, np.random.default_rng(0))


class TestDescriptor:
    def test_featureless_prototype(self):
        w = identity_world(n=20, place_len=5, featureless=np.ones(20),
                           descriptor_noise_sigma=0.0)
        rng = np.random.default_rng(0)
        np.testing.assert_array_equal(
            descriptor(w, 4, TRAIN_DOMAIN, rng), featureless_prototype(w)
        )

    def test_same_block_same_descriptor(self):
        w = identity_world(n=20, place_len=5, descriptor_noise_sigma=0.0)
        rng = np.random.default_rng(0)
        a = descriptor(w, 5, TRAIN_DOMAIN, rng)
        b = descriptor(w, 8, TRAIN_DOMAIN, rng)
        np.testing.assert_array_equal(a, b)

    def test_noise_mean_converges(self):
        sigma = 0.1
        w = identity_world(n=20, place_len=5, descriptor_noise_sigma=sigma)
        rng = np.random.default_rng(3)
        clean = descriptor(
            identity_world(n=20, place_len=5, descriptor_noise_sigma=0.0),
            7, TRAIN_DOMAIN, rng)
        draws = np.stack([descriptor(w, 7, TRAIN_DOMAIN, rng) for _ in range(10_000)])
        assert np.max(np.abs(draws.mean(axis=0) - clean)) < 3 * sigma / 100


class TestSerialization:
    def test_round_trip(self, tmp_path):
        w = generate_world(WorldConfig(), seed=9,
                           domains=[TRAIN_DOMAIN, Domain("a", 0.4, 2)])
        path = tmp_path / "w.json"
        save_world(w, path)
        assert load_world(path) == w

    def test_byte_identical_saves(self, tmp_path):
        w = generate_world(WorldConfig(), seed=9)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_world(w, p1)
        save_world(w, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_confusion_row_rejected(self, tmp_path):
        w = generate_world(WorldConfig(n_viewpoints=50, place_len_m=10,
                                       featureless_run_min_m=5,
                                       featureless_run_max_m=10), seed=0)
        data = world_to_dict(w)
        data["confusion"][0][0] -= 0.1  # row now sums to 0.9
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        with pytest.raises(WorldConfigError):
            load_world(path)

    def test_malformed_json_reports_line(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"n_viewpoints": 10,\n  "place_len_m": }')
        with pytest.raises(WorldConfigError, match="line 2"):
            load_world(path)


class TestPdvIngestion:
    def _write(self, path, rows, prefix="p", k=3):
        header = ["viewpoint", "domain", "timestamp"] + [f"{prefix}_{i}" for i in range(k)]
        lines = [",".join(header)]
        for r in rows:
            lines.append(",".join(str(x) for x in r))
        path.write_text("\n".join(lines) + "\n")

    def test_basic_load(self, tmp_path):
        path = tmp_path / "pdv.csv"
        self._write(path, [[0, "train", 1.0, 0.2, 0.3, 0.5]])
        table = load_pdv_table(path, "p")
        np.testing.assert_allclose(table[(0, "train")], [0.2, 0.3, 0.5])

    def test_duplicates_keep_youngest_timestamp(self, tmp_path):
        path = tmp_path / "pdv.csv"
        self._write(path, [
            [4, "train", 1.0, 1.0, 0.0, 0.0],
            [4, "train", 9.0, 0.0, 1.0, 0.0],
            [4, "train", 5.0, 0.0, 0.0, 1.0],
        ])
        table = load_pdv_table(path, "p")
        np.testing.assert_allclose(table[(4, "train")], [0.0, 1.0, 0.0])

    def test_invalid_vector_rejected(self, tmp_path):
        path = tmp_path / "pdv.csv"
        self._write(path, [[0, "train", 1.0, 0.9, 0.3, 0.5]])
        with pytest.raises(WorldConfigError, match="line 2"):
            load_pdv_table(path, "p")
