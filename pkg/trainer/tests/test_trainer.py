import json
import os

import numpy as np
import pytest
import torch

from orthocert_trainer import (BNNClassifier, DatasetMissingError, TrainConfig,
                               export_network, load_mnist, make_toy2d, train_vi)
from orthocert_trainer.cli import main as cli_main

# The exported files are consumed by the verifier package through its public
# interchange loader; that round trip is the contract under test here.
import orthocert


def toy_config(tmp_path, **kw):
    defaults = dict(dataset="toy2d", hidden_layers=1, hidden_units=8,
                    epochs=200, seed=1, batch_size=128,
                    export_path=str(tmp_path / "toy.json"))
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestData:
    def test_toy2d_is_separable_and_deterministic(self):
        xs, ys = make_toy2d(300, seed=5)
        assert xs.shape == (300, 2) and set(np.unique(ys)) <= {0, 1}
        margins = xs.sum(axis=1) - 1.0
        assert np.all((margins > 0) == (ys == 1))
        xs2, ys2 = make_toy2d(300, seed=5)
        np.testing.assert_array_equal(xs, xs2)
        np.testing.assert_array_equal(ys, ys2)

    def test_mnist_missing_gives_guidance(self, tmp_path):
        with pytest.raises(DatasetMissingError, match="mnist"):
            load_mnist(str(tmp_path))


class TestTraining:
    def test_toy2d_reaches_accuracy(self, tmp_path):
        config = toy_config(tmp_path)
        model, metrics = train_vi(config)
        assert metrics["train_accuracy"] > 0.9
        assert os.path.exists(config.export_path)

    def test_seed_determinism(self, tmp_path):
        a = toy_config(tmp_path, epochs=30, export_path=str(tmp_path / "a.json"))
        b = toy_config(tmp_path, epochs=30, export_path=str(tmp_path / "b.json"))
        train_vi(a)
        train_vi(b)
        assert open(a.export_path).read() == open(b.export_path).read()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(prior_std=0.0)
        with pytest.raises(ValueError):
            TrainConfig(dataset="cifar99")

    def test_kl_scale_widens_posterior(self, tmp_path):
        narrow = train_vi(toy_config(tmp_path, epochs=60, kl_scale=0.01,
                                     export_path=str(tmp_path / "n.json")))[0]
        wide = train_vi(toy_config(tmp_path, epochs=60, kl_scale=5.0,
                                   export_path=str(tmp_path / "w.json")))[0]
        narrow_std = float(narrow.layers[0].w_std.detach().mean())
        wide_std = float(wide.layers[0].w_std.detach().mean())
        assert wide_std > narrow_std

    @pytest.mark.skipif(not os.path.exists("data/train-images-idx3-ubyte"),
                        reason="MNIST IDX files not present")
    def test_mnist_2x50_accuracy(self, tmp_path):
        config = TrainConfig(dataset="mnist", hidden_layers=2, hidden_units=50,
                             epochs=5, seed=0, export_path=str(tmp_path / "m.json"))
        _, metrics = train_vi(config)
        assert metrics["train_accuracy"] >= 0.90


class TestExportFormat:
    def test_round_trips_through_verifier_loader(self, tmp_path):
        config = toy_config(tmp_path, epochs=30)
        train_vi(config)
        net = orthocert.load_network(config.export_path)
        assert net.input_dim == 2 and net.output_dim == 2
        assert net.n_w == 2 * 8 + 8 + 8 * 2 + 2

    def test_std_arrays_positive(self, tmp_path):
        config = toy_config(tmp_path, epochs=30)
        train_vi(config)
        doc = json.loads(open(config.export_path).read())
        for entry in doc["layers"]:
            if entry["type"] != "dense":
                continue
            assert np.all(np.asarray(entry["w_std"]) > 0)
            assert np.all(np.asarray(entry["b_std"]) > 0)

    def test_layer_structure(self, tmp_path):
        config = toy_config(tmp_path, epochs=1, hidden_layers=2, hidden_units=4)
        train_vi(config)
        doc = json.loads(open(config.export_path).read())
        kinds = [e["type"] for e in doc["layers"]]
        assert kinds == ["dense", "relu", "dense", "relu", "dense"]

    def test_mean_forward_agreement(self, tmp_path):
        config = toy_config(tmp_path, epochs=50)
        model, _ = train_vi(config)
        net = orthocert.load_network(config.export_path)
        rng = np.random.default_rng(9)
        xs = rng.uniform(0, 1, (100, 2))
        with torch.no_grad():
            ours = model(torch.from_numpy(xs), sample=False).numpy()
        for i in range(100):
            theirs = orthocert.forward(net, net.posterior.mean, xs[i])
            np.testing.assert_allclose(theirs, ours[i], rtol=1e-6)


class TestCli:
    def test_train_and_report(self, tmp_path, capsys):
        out = str(tmp_path / "cli.json")
        code = cli_main(["--dataset", "toy2d", "--layers", "1", "--units", "8",
                         "--epochs", "40", "--seed", "2", "--out", out])
        assert code == 0
        metrics = json.loads(capsys.readouterr().out)
        assert metrics["architecture"] == "1x8"
        assert os.path.exists(out)

    def test_missing_mnist_exit_code(self, tmp_path, capsys):
        code = cli_main(["--dataset", "mnist", "--data-dir", str(tmp_path),
                         "--out", str(tmp_path / "m.json")])
        assert code == 2
        assert "mnist" in capsys.readouterr().err


class TestSecondaryAcceptance:
    def test_trainer_round_trip_and_certification(self, tmp_path):
        config = toy_config(tmp_path)
        model, metrics = train_vi(config)
        assert metrics["train_accuracy"] > 0.9

        net = orthocert.load_network(config.export_path)
        rng = np.random.default_rng(77)
        xs = rng.uniform(0, 1, (100, 2))
        with torch.no_grad():
            ours = model(torch.from_numpy(xs), sample=False).numpy()
        for i in range(100):
            theirs = orthocert.forward(net, net.posterior.mean, xs[i])
            np.testing.assert_allclose(theirs, ours[i], rtol=1e-6)

        data_x, data_y = make_toy2d(50, seed=101)
        certified = False
        for x, y in zip(data_x, data_y):
            logits = orthocert.forward(net, net.posterior.mean, x)
            label = int(np.argmax(logits))
            if label != int(y):
                continue
            spec = orthocert.make_classification_spec(
                x, 0.01, label, [1 - label], 2)
            params = orthocert.CertifyParams(samples=5, scale=0.25, seed=3,
                                             max_verifier_calls=300)
            cert = orthocert.certify_pie(net, net.posterior, spec, params,
                                         orthocert.VerifierConfig(mode="ibp"))
            if cert.p_safe > 0.0:
                certified = True
                break
        status = "PASS" if certified else "FAIL"
        print(f"[acceptance] trainer-round-trip: {status} "
              f"accuracy={metrics['train_accuracy']:.3f}")
        assert certified
