import json

import numpy as np
import pytest

from orthocert import (LayerSpec, NetworkDef, NetworkFormatError,
                       PosteriorParams, RobustnessSpec, WeightBox,
                       box_from_center, forward, load_network,
                       make_classification_spec, sample_weights, save_network)

from conftest import (batched_forward, make_example1, random_dense_net,
                      reference_conv2d, small_conv_net,
                      straightline_dense_forward)


class TestForward:
    def test_example1_identity_weights(self):
        net = make_example1()
        out = forward(net, np.array([1.0, 1.0]), np.array([1.0]))
        assert out.shape == (1,)
        assert out[0] == 1.0

    def test_zero_weights_leave_final_bias(self):
        rng = np.random.default_rng(3)
        net = random_dense_net(rng, (3, 5, 2))
        out = forward(net, np.zeros(net.n_w), rng.normal(size=3))
        np.testing.assert_array_equal(out, np.zeros(2))

        w = np.zeros(net.n_w)
        w[-2:] = [0.7, -0.3]  # final-layer bias slots in the flat order
        out = forward(net, w, rng.normal(size=3))
        np.testing.assert_allclose(out, [0.7, -0.3])

    def test_matches_straightline_oracle(self):
        rng = np.random.default_rng(11)
        dims = (4, 6, 3)
        net = random_dense_net(rng, dims)
        for _ in range(20):
            w = rng.normal(size=net.n_w)
            x = rng.normal(size=4)
            expect = straightline_dense_forward(dims, w, x)
            np.testing.assert_allclose(forward(net, w, x), expect, rtol=1e-12)

    def test_conv_matches_reference(self):
        rng = np.random.default_rng(5)
        net = small_conv_net(rng)
        for _ in range(10):
            w = rng.normal(size=net.n_w)
            x = rng.normal(size=16)
            kernel = w[:8].reshape(2, 1, 2, 2)
            cbias = w[8:10]
            conv_out = reference_conv2d(x.reshape(1, 4, 4), kernel, cbias, 1)
            h = np.maximum(conv_out.reshape(-1), 0.0)
            mat = w[10:10 + 54].reshape(3, 18)
            expect = mat @ h + w[64:67]
            np.testing.assert_allclose(forward(net, w, x), expect, rtol=1e-12)

    def test_batched_helper_agrees_with_forward(self):
        rng = np.random.default_rng(7)
        for net in (random_dense_net(rng, (3, 4, 2)), small_conv_net(rng)):
            ws = rng.normal(size=(8, net.n_w))
            xs = rng.normal(size=(8, net.input_dim))
            batch = batched_forward(net, ws, xs)
            for i in range(8):
                np.testing.assert_allclose(batch[i], forward(net, ws[i], xs[i]), rtol=1e-12)

    def test_dimension_mismatch_rejected(self):
        net = make_example1()
        with pytest.raises(ValueError):
            forward(net, np.zeros(3), np.array([1.0]))
        with pytest.raises(ValueError):
            forward(net, np.zeros(2), np.array([1.0, 2.0]))

    def test_forward_is_pure(self):
        net = make_example1()
        w = np.array([0.5, -0.25])
        x = np.array([1.0])
        first = forward(net, w, x)
        for _ in range(3):
            np.testing.assert_array_equal(forward(net, w, x), first)


class TestSampling:
    def test_zero_std_returns_mean(self):
        post = PosteriorParams(np.array([1.0, -2.0, 0.5]), np.zeros(3))
        w = sample_weights(post, np.random.default_rng(0))
        np.testing.assert_array_equal(w, post.mean)

    def test_seed_determinism(self):
        post = PosteriorParams(np.zeros(10), np.ones(10))
        a = sample_weights(post, np.random.default_rng(42))
        b = sample_weights(post, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_law_of_large_numbers(self):
        post = PosteriorParams(np.zeros(1), np.ones(1))
        rng = np.random.default_rng(123)
        draws = np.array([sample_weights(post, rng)[0] for _ in range(100_000)])
        assert abs(draws.mean()) < 0.02
        assert abs(draws.std() - 1.0) < 0.02


class TestSpecs:
    def test_three_class_encoding(self):
        spec = make_classification_spec(np.zeros(2), 0.1, 0, [1, 2], 3)
        mats = [a for a, _ in spec.halfspaces]
        offsets = [b for _, b in spec.halfspaces]
        np.testing.assert_array_equal(mats[0], [1.0, -1.0, 0.0])
        np.testing.assert_array_equal(mats[1], [1.0, 0.0, -1.0])
        assert offsets == [0.0, 0.0]

    def test_empty_targets_rejected(self):
        with pytest.raises(ValueError):
            make_classification_spec(np.zeros(2), 0.1, 0, [], 3)

    def test_ten_class_structure(self):
        targets = [c for c in range(10) if c != 3]
        spec = make_classification_spec(np.zeros(4), 0.05, 3, targets, 10)
        assert len(spec.halfspaces) == 9
        for a, b in spec.halfspaces:
            assert b == 0.0
            assert np.sum(a == 1.0) == 1 and np.sum(a == -1.0) == 1
            assert np.sum(a != 0.0) == 2
            assert a[3] == 1.0

    def test_label_in_targets_rejected(self):
        with pytest.raises(ValueError):
            make_classification_spec(np.zeros(2), 0.1, 1, [1, 2], 3)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            RobustnessSpec(np.zeros(2), -0.1, ((np.array([1.0, 0.0]), 0.0),))
        with pytest.raises(ValueError):
            RobustnessSpec(np.zeros(2), 0.1, ())
        with pytest.raises(ValueError):
            RobustnessSpec(np.zeros(2), 0.1, ((np.zeros(2), 0.0),))


class TestBoxes:
    def test_box_from_center(self):
        box = box_from_center(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
        np.testing.assert_array_equal(box.lower, [-1.0, -1.0])
        np.testing.assert_array_equal(box.upper, [1.0, 1.0])

    def test_zero_radius_degenerates(self):
        box = box_from_center(np.array([0.3, -0.7]), np.zeros(2))
        np.testing.assert_array_equal(box.lower, box.upper)

    def test_asymmetric_center(self):
        box = box_from_center(np.array([0.5, -0.5]), np.array([1.0, 2.0]))
        np.testing.assert_array_equal(box.lower, [-0.5, -2.5])
        np.testing.assert_array_equal(box.upper, [1.5, 1.5])

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            box_from_center(np.zeros(2), np.array([1.0, -0.1]))

    def test_inverted_box_rejected(self):
        with pytest.raises(ValueError):
            WeightBox(np.array([1.0]), np.array([0.0]))


class TestFlatteningOrder:
    def test_layer_major_row_major_then_bias(self):
        net = random_dense_net(np.random.default_rng(0), (2, 3, 2))
        w = np.arange(net.n_w, dtype=np.float64)
        # layer 1: weights 0..5 in (3, 2) row-major, bias 6..8
        amap = net.affine_map(0)
        np.testing.assert_array_equal(amap.weight_idx, [[0, 1], [2, 3], [4, 5]])
        np.testing.assert_array_equal(amap.bias_idx, [6, 7, 8])
        # layer 2 starts right after: weights 9..14, bias 15..16
        amap2 = net.affine_map(2)
        np.testing.assert_array_equal(amap2.weight_idx, [[9, 10, 11], [12, 13, 14]])
        np.testing.assert_array_equal(amap2.bias_idx, [15, 16])
        assert net.n_w == 17
        del w

    def test_n_w_bookkeeping(self):
        net = small_conv_net(np.random.default_rng(0))
        assert net.n_w == 8 + 2 + 54 + 3
        assert net.input_dim == 16
        assert net.output_dim == 3


class TestNetworkValidation:
    def test_chain_mismatch_rejected(self):
        layers = (LayerSpec.dense(2, 3), LayerSpec.relu(), LayerSpec.dense(4, 2))
        with pytest.raises(ValueError):
            NetworkDef(layers, PosteriorParams(np.zeros(19), np.zeros(19)))

    def test_posterior_length_checked(self):
        layers = (LayerSpec.dense(2, 2, bayesian=True),)
        with pytest.raises(ValueError):
            NetworkDef(layers, PosteriorParams(np.zeros(5), np.zeros(5)))

    def test_deterministic_layer_requires_zero_std(self):
        layers = (LayerSpec.dense(2, 2, bayesian=False),)
        with pytest.raises(ValueError):
            NetworkDef(layers, PosteriorParams(np.zeros(6), np.full(6, 0.1)))

    def test_negative_std_rejected(self):
        with pytest.raises(ValueError):
            PosteriorParams(np.zeros(2), np.array([0.1, -0.1]))


class TestInterchange:
    def test_example1_file_loads_with_two_params(self, tmp_path):
        doc = {"layers": [
            {"type": "dense", "in": 1, "out": 1, "bayesian": True,
             "w_mean": [[0.0]], "w_std": [[1.0]]},
            {"type": "relu"},
            {"type": "dense", "in": 1, "out": 1, "bayesian": True,
             "w_mean": [[0.0]], "w_std": [[1.0]]},
            {"type": "relu"},
        ]}
        path = tmp_path / "ex1.json"
        path.write_text(json.dumps(doc))
        net = load_network(path)
        assert net.n_w == 2
        assert forward(net, np.array([1.0, 1.0]), np.array([1.0]))[0] == 1.0

    def test_negative_std_rejected(self, tmp_path):
        doc = {"layers": [
            {"type": "dense", "in": 1, "out": 1, "bayesian": True,
             "w_mean": [[0.0]], "w_std": [[-1.0]]},
        ]}
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(NetworkFormatError):
            load_network(path)

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        net = random_dense_net(rng, (2, 50, 3), sigma=0.01)
        path = tmp_path / "net.json"
        save_network(net, path)
        loaded = load_network(path)
        np.testing.assert_array_equal(loaded.posterior.mean, net.posterior.mean)
        np.testing.assert_array_equal(loaded.posterior.std, net.posterior.std)
        assert loaded.layers == net.layers

    def test_conv_round_trip(self, tmp_path):
        net = small_conv_net(np.random.default_rng(4))
        path = tmp_path / "conv.json"
        save_network(net, path)
        loaded = load_network(path)
        np.testing.assert_array_equal(loaded.posterior.mean, net.posterior.mean)
        np.testing.assert_array_equal(loaded.posterior.std, net.posterior.std)
        assert loaded.layers == net.layers

    def test_malformed_document_rejected(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("{not json")
        with pytest.raises(NetworkFormatError):
            load_network(path)
        path.write_text(json.dumps({"no_layers": []}))
        with pytest.raises(NetworkFormatError):
            load_network(path)
        path.write_text(json.dumps({"layers": [{"type": "mystery"}]}))
        with pytest.raises(NetworkFormatError):
            load_network(path)

    def test_shape_mismatch_rejected(self, tmp_path):
        doc = {"layers": [
            {"type": "dense", "in": 2, "out": 1, "bayesian": True,
             "w_mean": [[0.0]], "w_std": [[1.0]]},
        ]}
        path = tmp_path / "bad_shape.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(NetworkFormatError):
            load_network(path)

    def test_missing_std_on_bayesian_rejected(self, tmp_path):
        doc = {"layers": [
            {"type": "dense", "in": 1, "out": 1, "bayesian": True,
             "w_mean": [[0.0]]},
        ]}
        path = tmp_path / "nostd.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(NetworkFormatError):
            load_network(path)

    def test_deterministic_layer_omits_std(self, tmp_path):
        doc = {"layers": [
            {"type": "dense", "in": 2, "out": 2, "bayesian": False,
             "w_mean": [[1.0, 0.0], [0.0, 1.0]], "b_mean": [0.0, 0.0]},
        ]}
        path = tmp_path / "det.json"
        path.write_text(json.dumps(doc))
        net = load_network(path)
        np.testing.assert_array_equal(net.posterior.std, np.zeros(6))
