import numpy as np
import pytest

from activevpr import rl
from activevpr.nets import Mlp, softmax, softplus


def random_transition(rng, dim=6, n_actions=4, terminal=False):
    reward = int(rng.choice([-1, 1])) if terminal else 0
    return rl.Transition(
        state=rng.normal(size=dim),
        action=int(rng.integers(0, n_actions)),
        reward=reward,
        next_state=None if terminal else rng.normal(size=dim),
        terminal=terminal,
    )


class TestMlp:
    def test_zero_weights_zero_output(self):
        net = Mlp([4, 8, 3], seed=0)
        for w in net.weights:
            w[...] = 0.0
        for b in net.biases:
            b[...] = 0.0
        np.testing.assert_allclose(net.forward(np.ones(4)), np.zeros(3))

    def test_deterministic_forward(self, rng):
        net = Mlp([5, 7, 2], seed=1)
        x = rng.normal(size=5)
        np.testing.assert_array_equal(net.forward(x), net.forward(x))

    def test_forward_matches_independent_reimplementation(self, rng):
        # duplicate implementation with explicit loops
        net = Mlp([4, 6, 6, 3], seed=2)
        x = rng.normal(size=4)
        a = x.copy()
        for i, (W, b) in enumerate(zip(net.weights, net.biases)):
            z = np.array([sum(a[j] * W[j, k] for j in range(W.shape[0])) + b[k]
                          for k in range(W.shape[1])])
            a = softplus(z) if i < len(net.weights) - 1 else z
        np.testing.assert_allclose(net.forward(x), a, atol=1e-10)

    def test_save_load_round_trip(self, tmp_path):
        net = Mlp([4, 5, 2], seed=3)
        path = tmp_path / "net.json"
        net.save(path)
        back = Mlp.load(path)
        assert back.layers == net.layers
        np.testing.assert_array_equal(back.get_flat(), net.get_flat())


class TestTransitionAndBuffer:
    def test_reward_terminal_coupling(self, rng):
        with pytest.raises(ValueError):
            rl.Transition(np.zeros(2), 0, 1, np.zeros(2), terminal=False)
        with pytest.raises(ValueError):
            rl.Transition(np.zeros(2), 0, 0, None, terminal=True)
        with pytest.raises(ValueError):
            rl.Transition(np.zeros(2), 0, 2, None, terminal=True)

    def test_capacity_evicts_oldest(self, rng):
        buf = rl.ReplayBuffer(capacity=5)
        trs = [random_transition(rng) for _ in range(8)]
        for tr in trs:
            buf.add(tr)
        assert len(buf) == 5
        kept = {id(t) for t in buf._items}
        for old in trs[:3]:
            assert id(old) not in kept
        for new in trs[3:]:
            assert id(new) in kept

    def test_uniform_sampling(self, rng):
        buf = rl.ReplayBuffer(capacity=10)
        for _ in range(10):
            buf.add(random_transition(rng))
        index = {id(t): i for i, t in enumerate(buf._items)}
        counts = np.zeros(10)
        for tr in buf.sample(20_000, rng):
            counts[index[id(tr)]] += 1
        freqs = counts / counts.sum()
        assert np.all(np.abs(freqs - 0.1) < 0.02)

    def test_state_round_trip(self, rng):
        buf = rl.ReplayBuffer(capacity=6)
        for i in range(9):
            buf.add(random_transition(rng, terminal=(i % 3 == 0)))
        back = rl.ReplayBuffer.from_state(6, buf.state_arrays())
        assert len(back) == len(buf)
        for a, b in zip(buf._items, back._items):
            np.testing.assert_array_equal(a.state, b.state)
            assert (a.action, a.reward, a.terminal) == (b.action, b.reward, b.terminal)


class TestTdTarget:
    def test_terminal_is_reward(self):
        tr = rl.Transition(np.zeros(3), 0, 1, None, True)
        assert rl.td_target(tr, Mlp([3, 4, 2], seed=0), 0.99) == 1.0

    def test_nonterminal_bootstrap(self):
        net = Mlp([3, 4, 2], seed=0)
        tr = rl.Transition(np.zeros(3), 0, 0, np.ones(3), False)
        expected = 0.99 * float(np.max(net.forward(np.ones(3))))
        assert rl.td_target(tr, net, 0.99) == pytest.approx(expected)
        # direct arithmetic case
        for w in net.weights:
            w[...] = 0.0
        net.biases[-1][...] = [0.5, 0.1]
        assert rl.td_target(tr, net, 0.99) == pytest.approx(0.495)

    def test_gamma_zero(self, rng):
        net = Mlp([3, 4, 2], seed=1)
        tr = random_transition(rng, dim=3, n_actions=2)
        assert rl.td_target(tr, net, 0.0) == tr.reward


class TestTrainStep:
    def test_zero_error_leaves_weights(self, rng):
        net = Mlp([4, 6, 3], seed=0)
        target = net.copy()
        # craft transitions whose targets equal current predictions
        batch = []
        for _ in range(5):
            s = rng.normal(size=4)
            a = int(rng.integers(0, 3))
            q_sa = float(net.forward(s)[a])
            # terminal transition with reward impossible (must be +/-1), so use
            # gamma=1 and next state chosen so target == q_sa is not feasible in
            # general; instead check via direct zero-TD construction:
            batch.append(rl.Transition(s, a, 0, s, False))
        # pick gamma so target = gamma * max_q == q_sa is not exact; instead
        # verify loss returned equals mean squared TD error computed directly
        gamma = 0.9
        before = net.get_flat().copy()
        expected = np.mean([
            (float(net.forward(tr.state)[tr.action]) -
             rl.td_target(tr, target, gamma)) ** 2
            for tr in batch
        ])
        loss = rl.train_step(net, target, batch, lr=0.0, gamma=gamma)
        assert loss == pytest.approx(expected, rel=1e-12)
        np.testing.assert_array_equal(net.get_flat(), before)  # lr=0

    def test_gradient_matches_finite_differences(self, rng):
        net = Mlp([5, 8, 3], seed=4)
        target = Mlp([5, 8, 3], seed=5)
        batch = [random_transition(rng, dim=5, n_actions=3, terminal=(i == 0))
                 for i in range(3)]
        gamma = 0.95

        def loss_at(flat):
            probe = net.copy()
            probe.set_flat(flat)
            errs = [float(probe.forward(tr.state)[tr.action]) -
                    rl.td_target(tr, target, gamma) for tr in batch]
            return np.mean(np.square(errs))

        # analytic gradient via a zero-lr step's internals
        states = np.stack([tr.state for tr in batch])
        actions = np.array([tr.action for tr in batch])
        targets = np.array([rl.td_target(tr, target, gamma) for tr in batch])
        q, cache = net.forward_cached(states)
        d_q = np.zeros_like(q)
        d_q[np.arange(3), actions] = 2.0 * (q[np.arange(3), actions] - targets) / 3
        gw, gb = net.backward(cache, d_q)
        analytic = net.flat_grads(gw, gb)

        flat = net.get_flat()
        eps = 1e-6
        for i in rng.choice(flat.size, size=40, replace=False):
            x = flat.copy()
            x[i] += eps
            hi = loss_at(x)
            x[i] -= 2 * eps
            lo = loss_at(x)
            fd = (hi - lo) / (2 * eps)
            denom = max(abs(fd), abs(analytic[i]), 1e-8)
            assert abs(fd - analytic[i]) / denom < 1e-4

    def test_repeated_steps_drive_loss_to_zero(self, rng):
        net = Mlp([4, 8, 2], seed=6)
        target = net.copy()
        tr = rl.Transition(rng.normal(size=4), 1, 1, None, True)
        losses = [rl.train_step(net, target, [tr], lr=0.05, gamma=0.9)
                  for _ in range(300)]
        assert losses[-1] < 1e-6
        assert losses[-1] < losses[0]

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_divergence_detected(self):
        net = Mlp([2, 4, 2], seed=0)
        net.weights[0][...] = 1e200
        batch = [rl.Transition(np.ones(2) * 1e200, 0, 1, None, True)]
        with pytest.raises(rl.TrainingDivergenceError):
            rl.train_step(net, net.copy(), batch, lr=0.1, gamma=0.9)


class TestEpsilonGreedy:
    def test_greedy(self):
        rng = np.random.default_rng(0)
        assert rl.epsilon_greedy(np.array([0.1, 0.9, 0.3]), 0.0, rng) == 1

    def test_tie_break_smallest(self):
        rng = np.random.default_rng(0)
        assert rl.epsilon_greedy(np.array([0.9, 0.1, 0.9]), 0.0, rng) == 0

    def test_full_exploration_uniform(self):
        rng = np.random.default_rng(1)
        q = np.array([5.0, 0.0, 0.0, 0.0])
        counts = np.bincount(
            [rl.epsilon_greedy(q, 1.0, rng) for _ in range(100_000)], minlength=4
        )
        freqs = counts / counts.sum()
        assert np.all(np.abs(freqs - 0.25) < 0.02)


class ChainEnv:
    """Tiny deterministic chain: reward +1 iff the right action for the
    start state is taken; used to exercise the training loop itself."""

    n_actions = 3
    state_dim = 5

    def __init__(self, seed=0):
        self.seed = seed

    def reset(self, episode=0):
        self.s = episode % 5
        state = np.zeros(5)
        state[self.s] = 1.0
        return state

    def step(self, action):
        reward = 1 if action == self.s % 3 else -1
        self.last_rank = 1 if reward == 1 else 2
        return np.zeros(5), reward, True


class TestTrainDqn:
    def test_zero_episodes_returns_initial_net(self):
        env = ChainEnv()
        cfg = rl.DqnConfig(episodes=0, seed=3, hidden=(8,))
        net, log = rl.train_dqn(env, cfg)
        assert log == []
        np.testing.assert_array_equal(
            net.get_flat(), Mlp([5, 8, 3], seed=3).get_flat()
        )

    def test_learns_trivial_mapping(self):
        env = ChainEnv()
        cfg = rl.DqnConfig(episodes=800, seed=0, hidden=(16,), batch_size=16,
                           buffer_capacity=2000, lr=5e-3, target_sync=100)
        net, log = rl.train_dqn(env, cfg)
        correct = 0
        for s in range(5):
            state = np.zeros(5)
            state[s] = 1.0
            correct += int(np.argmax(net.forward(state))) == s % 3
        assert correct >= 4
        assert np.mean([r.reward for r in log[-100:]]) > 0.8

    def test_deterministic_log(self):
        cfg = rl.DqnConfig(episodes=120, seed=7, hidden=(8,), batch_size=8)
        _, log1 = rl.train_dqn(ChainEnv(), cfg)
        _, log2 = rl.train_dqn(ChainEnv(), cfg)
        a = np.array([r.as_tuple() for r in log1])
        b = np.array([r.as_tuple() for r in log2])
        np.testing.assert_array_equal(a, b)  # nan-safe elementwise equality

    def test_resume_matches_uninterrupted(self, tmp_path):
        cfg = rl.DqnConfig(episodes=120, seed=2, hidden=(8,), batch_size=8,
                           checkpoint_every=40)
        ckpt = tmp_path / "run.ckpt.npz"
        net_full, log_full = rl.train_dqn(ChainEnv(), cfg)
        # interrupted run: stop at 80 episodes, then resume to 120; the decay
        # fraction is chosen so both configs anneal epsilon over the same 36
        # episodes (0.3 * 120 == 0.45 * 80)
        cfg_short = rl.DqnConfig(episodes=80, seed=2, hidden=(8,), batch_size=8,
                                 checkpoint_every=40, epsilon_decay_frac=0.45)
        rl.train_dqn(ChainEnv(), cfg_short, checkpoint_path=ckpt)
        net_res, log_res = rl.train_dqn(ChainEnv(), cfg, resume_from=ckpt)
        np.testing.assert_array_equal(net_res.get_flat(), net_full.get_flat())
        np.testing.assert_array_equal(
            np.array([r.as_tuple() for r in log_res]),
            np.array([r.as_tuple() for r in log_full]),
        )

    def test_exactly_one_nonzero_reward_per_episode(self):
        cfg = rl.DqnConfig(episodes=50, seed=1, hidden=(8,), batch_size=8)
        _, log = rl.train_dqn(ChainEnv(), cfg)
        assert all(r.reward in (-1, 1) for r in log)
