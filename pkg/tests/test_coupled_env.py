import numpy as np
import pytest

from dccfr.battery import BatAction
from dccfr.coupled_env import (
    Agent,
    CoupledEnv,
    EnvConfig,
    env_config_from_json,
    episode_totals,
    obs_dims,
)
from dccfr.dc_thermal import SetpointAction
from dccfr.errors import ConfigInvalid, Empty, InvalidAction, MaskedAction
from dccfr.exogenous import synth_bundle
from dccfr.load_shift import LsAction

BUNDLE = synth_bundle("NY", 40, seed=7)


def make_env(**kw):
    kw.setdefault("episode_steps", 96)
    return CoupledEnv(EnvConfig(bundle=BUNDLE, **kw))


IDLE = (int(LsAction.ASSIGN), int(SetpointAction.HOLD), int(BatAction.IDLE))


def test_reset_deterministic_and_layout():
    env = make_env()
    a = env.reset()
    b = env.reset()
    for agent in Agent:
        assert np.array_equal(a[agent], b[agent])
    assert len(a[Agent.LS]) == 14
    assert len(a[Agent.E]) == 9
    assert len(a[Agent.BAT]) == 11
    assert obs_dims(env.cfg) == {Agent.LS: 14, Agent.E: 9, Agent.BAT: 11}


def test_reset_initial_features():
    obs = make_env().reset()
    # midnight Jan 1: sin/cos hour = (0, 1), day-of-year angle ~ 0
    t = obs[Agent.E][:4]
    assert t[0] == pytest.approx(0.0, abs=1e-9)
    assert t[1] == pytest.approx(1.0)
    assert abs(t[2]) < 1e-6 and t[3] == pytest.approx(1.0, abs=1e-6)
    # battery starts half charged
    assert obs[Agent.BAT][5] == pytest.approx(0.5)


def test_constant_ci_feature_normalization():
    obs = make_env().reset()
    ci_feats = obs[Agent.BAT][6:]
    assert np.all(ci_feats >= 0.0)
    env = make_env()
    env.reset()
    # feature = ci / 500 by contract
    assert ci_feats[0] == pytest.approx(BUNDLE.ci.values[0] / 500.0)


def test_blend_weights_exact():
    env = make_env()
    raw = np.array([-1.0, -2.0, -3.0])
    blended = env.cfg.reward_weights @ raw
    expected = np.array([-1.3, -2.0, -2.7])
    assert np.allclose(blended, expected, atol=1e-12)
    assert np.array_equal(blended, env.cfg.reward_weights @ raw)
    assert np.allclose(env.cfg.reward_weights.sum(axis=1), 1.0, atol=0)


def test_identical_raw_rewards_blend_to_same():
    w = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]])
    raw = np.full(3, -1.7)
    assert np.allclose(w @ raw, -1.7, atol=1e-12)


def test_turn_delay_transition_shape():
    env = make_env()
    obs0 = env.reset()
    obs1, r1, m1, done, completed = env.step(*IDLE)
    assert completed == []
    obs2, r2, m2, done, completed = env.step(*IDLE)
    assert len(completed) == 3
    for tr in completed:
        # obs from step 0, next_obs from step 1, reward from step-0 outcomes
        assert np.array_equal(tr.obs, obs0[tr.agent])
        assert np.array_equal(tr.next_obs, obs1[tr.agent])
        assert tr.reward == r1[tr.agent]
        assert tr.done is False
        assert 0.0 <= tr.gamma <= 1.0


def test_flush_emits_final_transition():
    env = make_env(episode_steps=3)
    env.reset()
    env.step(*IDLE)
    env.step(*IDLE)
    obs3, r3, m3, done, completed = env.step(*IDLE)
    assert done is True
    final = env.flush()
    assert len(final) == 3
    for tr in final:
        assert tr.done is True
        assert tr.reward == r3[tr.agent]
        assert np.array_equal(tr.next_obs, obs3[tr.agent])
    with pytest.raises(InvalidAction):
        env.step(*IDLE)


def test_facility_energy_independent_of_battery():
    def run(bat_seq):
        env = make_env()
        env.reset()
        rng = np.random.default_rng(5)
        efac = []
        for i in range(96):
            mask = env.bat_mask()
            a = bat_seq(i, rng, mask)
            _, _, m, _, _ = env.step(int(LsAction.ASSIGN), int(SetpointAction.HOLD), a)
            efac.append(m.e_fac)
        return efac

    idle = run(lambda i, rng, mask: int(BatAction.IDLE))
    rand = run(lambda i, rng, mask: int(rng.choice([j for j in range(3) if mask[j]])))
    assert idle == rand  # bitwise identical


def test_masked_action_raises():
    env = make_env()
    env.reset()
    # drain the battery to its reserve, then Supply must be rejected
    for _ in range(30):
        mask = env.bat_mask()
        if not mask[int(BatAction.SUPPLY)]:
            break
        env.step(int(LsAction.ASSIGN), int(SetpointAction.HOLD), int(BatAction.SUPPLY))
    assert not env.bat_mask()[int(BatAction.SUPPLY)]
    with pytest.raises(MaskedAction):
        env.step(int(LsAction.ASSIGN), int(SetpointAction.HOLD), int(BatAction.SUPPLY))


def test_invalid_action_raises():
    env = make_env()
    env.reset()
    with pytest.raises(InvalidAction):
        env.step(5, 1, 2)


def test_metrics_accounting_identities():
    env = make_env(episode_steps=96 * 7)
    env.reset()
    rng = np.random.default_rng(11)
    metrics = []
    done = False
    while not done:
        mask = env.bat_mask()
        a_bat = int(rng.choice([j for j in range(3) if mask[j]]))
        _, _, m, done, _ = env.step(int(rng.integers(0, 2)), int(rng.integers(0, 3)), a_bat)
        metrics.append(m)
        assert m.co2_kg == m.ci * m.e_grid / 1000.0
        assert m.cost_usd == m.price * m.e_grid
        assert m.e_grid >= 0.0
    co2_t, energy_mwh, cost = episode_totals(metrics)
    assert co2_t == pytest.approx(sum(m.ci * m.e_grid for m in metrics) / 1e6, rel=1e-12)
    assert energy_mwh == pytest.approx(sum(m.e_fac for m in metrics) / 1e3, rel=1e-12)


def test_episode_totals_hand_values():
    from dccfr.coupled_env import StepMetrics

    def mk(e_grid, ci, price, e_fac):
        return StepMetrics(t=0, e_fac=e_fac, e_grid=e_grid, co2_kg=ci * e_grid / 1000.0,
                           cost_usd=price * e_grid, penalty=0.0, t_zone=22, t_set=22,
                           t_out=10, u_exec=0.5, queue=0.0, soc=300, ci=ci, price=price)

    co2, mwh, cost = episode_totals([mk(250.0, 400.0, 0.20, 200.0), mk(0.0, 400.0, 0.20, 300.0)])
    assert co2 == pytest.approx(0.1)
    assert mwh == pytest.approx(0.5)
    assert cost == pytest.approx(50.0)
    with pytest.raises(Empty):
        episode_totals([])


def test_full_determinism():
    def run():
        env = make_env()
        env.reset()
        rng = np.random.default_rng(3)
        out = []
        for _ in range(96):
            mask = env.bat_mask()
            a_bat = int(rng.choice([j for j in range(3) if mask[j]]))
            _, r, m, _, _ = env.step(int(rng.integers(0, 2)), int(rng.integers(0, 3)), a_bat)
            out.append((r[Agent.LS], r[Agent.E], r[Agent.BAT], m.e_fac, m.e_grid, m.soc))
        return out

    assert run() == run()


def test_observation_bounds_on_synthetic_bundle():
    env = make_env(episode_steps=96 * 30)
    obs = env.reset()
    rng = np.random.default_rng(17)
    done = False
    while not done:
        for agent in Agent:
            v = obs[agent]
            assert np.all(np.isfinite(v))
            assert np.all(v[4:] >= -0.5) and np.all(v[4:] <= 2.5)
        mask = env.bat_mask()
        a_bat = int(rng.choice([j for j in range(3) if mask[j]]))
        obs, _, _, done, _ = env.step(int(rng.integers(0, 2)), int(rng.integers(0, 3)), a_bat)


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        EnvConfig(bundle=BUNDLE, episode_steps=10 ** 6)
    with pytest.raises(ConfigInvalid):
        EnvConfig(bundle=BUNDLE, reward_weights=np.eye(3) * 2.0)
    with pytest.raises(ConfigInvalid):
        EnvConfig(bundle=BUNDLE, co2_scale=0.0)


def test_env_config_from_json():
    doc = {
        "thermal": {"p_idle": 350.0},
        "load_shift": {"flex_fraction": 0.2},
        "battery": {"capacity": 500.0, "soc_min": 50.0},
        "lookahead_hours": 2,
        "scales": {"co2": 50.0, "cost": 10.0},
        "episode": {"steps": 96, "start_step": 96},
    }
    cfg = env_config_from_json(doc, BUNDLE)
    assert cfg.thermal.p_idle == 350.0
    assert cfg.ls.flex_fraction == 0.2
    assert cfg.bat.capacity == 500.0
    assert cfg.lookahead_hours == 2
    assert cfg.co2_scale == 50.0
    assert cfg.start_step == 96
    assert obs_dims(cfg)[Agent.LS] == 12
    with pytest.raises(ConfigInvalid):
        env_config_from_json({"thermal": {"bogus": 1}}, BUNDLE)
