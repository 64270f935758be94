# SPDX-License-Identifier: Apache-2.0
import math

import pytest

import lcx


def test_prior_curves_respect_constraints():
    curves, means = lcx.sample_prior(20, 100, seed=3)
    assert len(curves) == 20 and all(len(c) == 100 for c in curves)
    for mu in means:
        assert all(0.0 <= v <= 1.0 for v in mu)
        assert mu[0] < mu[-1]
    again, _ = lcx.sample_prior(20, 100, seed=3)
    assert again == curves


def test_normalization_roundtrip_and_errors():
    spec = lcx.NormalizationSpec(minimize=True, l_hard=0.0, l_soft=0.0, u_soft=math.log(10), u_hard=math.inf)
    y = lcx.normalize(2.3, spec)
    assert 0.0 < y < 1.0
    assert lcx.denormalize(y, spec) == pytest.approx(2.3, abs=1e-9)
    assert lcx.normalize(0.0, lcx.NormalizationSpec(l_hard=-math.inf, l_soft=-1, u_soft=1, u_hard=math.inf)) == 0.5
    with pytest.raises(lcx.ConfigError):
        lcx.NormalizationSpec(l_soft=1.0, u_soft=0.0)
    with pytest.raises(lcx.NumericError):
        lcx.normalize(2.0, lcx.NormalizationSpec())


def test_mcmc_ppd_and_scores():
    curves, _ = lcx.sample_prior(1, 30, seed=5)
    chain = lcx.ChainConfig(nwalkers=26, nsamples=40, burn_in=10, seed=1)
    ppds = lcx.predict(chain, curves[0][:5], [10, 30])
    assert [p.kind for p in ppds] == ["mixture", "mixture"]
    for p in ppds:
        assert p.quantile(0.05) <= p.quantile(0.5) <= p.quantile(0.95)
        assert 0.0 <= p.exceed_prob(0.5) <= 1.0
    ll, mse = lcx.score(chain, curves[0], 0.2)
    assert math.isfinite(ll) and mse >= 0.0


def test_rank_and_eval_helpers():
    assert lcx.cutoff_index(0.1, 30) == 3
    assert len(lcx.subsample(list(range(1414)))) == 95
    ranks = lcx.rank_aggregate([("c", "A", 0.1, 1.0, 0.5), ("c", "B", 0.1, 1.0, 0.5)])
    assert [r[2] for r in ranks] == [1.5, 1.5]


def test_simulate_none_and_patience():
    curves, _ = lcx.sample_prior(6, 10, seed=8)
    regret, epochs = lcx.simulate(curves, 45)
    assert len(regret) == 45 and epochs == [10, 10, 10, 10, 5]
    assert all(a >= b >= 0 for a, b in zip(regret, regret[1:]))
    _, epochs = lcx.simulate(curves, 60, policy="patience", k=1)
    assert sum(epochs) <= 60
    with pytest.raises(lcx.ConfigError):
        lcx.simulate(curves, 10, policy="sometimes")


def test_file_commands_roundtrip(tmp_path):
    curves = tmp_path / "curves.csv"
    lcx.commands.sample_prior(4, 100, 11, str(curves))
    text = curves.read_text()
    assert "#space=normalized" in text
    lcx.commands.sample_prior(4, 100, 11, str(tmp_path / "again.csv"))
    assert (tmp_path / "again.csv").read_text() == text

    cfg = {"nlayers": 1, "emsize": 16, "nheads": 2, "nhidden": 32, "nbins": 50,
           "nb_data": 400, "batch_size": 20, "lr": 1e-3, "bin_draws": 100}
    ckpt = tmp_path / "m.ckpt"
    lcx.commands.train(cfg, 3, str(ckpt))
    model = lcx.Predictor.load(str(ckpt))
    assert model.nbins == 50 and len(model.edges) == 51
    ppds = lcx.predict(model, [0.2, 0.3, 0.35], [4, 50, 100])
    for p in ppds:
        assert p.kind == "discrete"
        assert 0.0 <= p.quantile(0.05) <= p.quantile(0.5) <= p.quantile(0.95) <= 1.0

    out = tmp_path / "ppd.csv"
    lcx.commands.infer(str(ckpt), str(curves), 0.5, out=str(out))
    assert out.read_text().splitlines()[0] == "curve_id,step,epoch,q05,q50,q95"

    with pytest.raises(lcx.IoError):
        lcx.Predictor.load(str(tmp_path / "missing.ckpt"))
    with pytest.raises(lcx.ConfigError):
        lcx.commands.train({"no_such_key": 1}, 0, str(tmp_path / "x.ckpt"))
