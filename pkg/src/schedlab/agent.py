"""Recurrent twin actor-critic learner with softmax value targets.

The agent keeps two independent actor-critic pairs.  Every network is a
double-branch design: a fully-connected branch reads the current observation
(critics also read the action under evaluation), and an LSTM branch digests
the (observation, previous action) sequence so the policy can condition on
history when the environment hides state.  Branch features are concatenated
before the output head; actor heads squash through a sigmoid scaled to
[0, e_max] because allocations are one-sided boxes.

Training follows the usual pattern for deterministic policy gradients with
twin critics, with two twists:

  * bootstrap targets are a softmax-weighted value: K noisy samples around
    the target actor's proposal, scored by the pessimistic minimum of both
    target critics, averaged with importance weights exp(beta * Q) / p where
    p is the Gaussian density of the (clipped) noise.  beta = 0 degenerates
    to an importance-weighted mean and K = 1 to the plain twin-critic target;
  * replay stores whole episodes and every update backpropagates through the
    unrolled recurrence from the first slot, so recurrent credit assignment
    is exact rather than truncated.

Actor updates run on an episode schedule (one per `policy_delay` training
episodes), followed by soft target updates for all four target networks.

Behavior policy: both actors propose, each proposal is scored by its own
critic (with that critic's recurrent state), and the higher-scored action
executes.  Set selection="alternate" to instead alternate actors between
episodes.  Recurrent states advance on (o_t, a_{t-1}) only, so tracking all
four networks online is exact regardless of which action executes.

The noise density used in the importance weights is the unclipped Gaussian
evaluated at the clipped noise; the boundary atoms created by clipping are
ignored.  This keeps weights finite and cancels in the ratio up to the
(small) clipped mass.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .errors import ConfigError, DivergenceError

__all__ = [
    "AgentConfig", "Episode", "EpisodeReplay",
    "Actor", "Critic", "JointAdapter", "MultihopAdapter", "DecomposedAdapter",
    "adapt", "softmax_weighted_value", "bellman_targets", "noise_log_density",
    "Rsd4Agent", "td3_like_config", "sd3_like_config",
]


@dataclass
class AgentConfig:
    """Hyperparameters; defaults follow common twin-critic practice and are
    all overridable because the reference experiments leave most unreported."""

    obs_dim: int
    action_dim: int
    action_limit: float                 # allocations live in [0, action_limit]
    hidden_fc: int = 32
    hidden_lstm: int = 32
    hidden_merge: int = 32
    recurrent: bool = True              # False drops the LSTM branch entirely
    gamma: float = 0.99
    tau_soft: float = 0.005
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    explore_sigma: float = None         # default 0.1 * action_limit
    target_sigma: float = None          # default 0.2 * action_limit
    noise_clip: float = None            # default 0.5 * action_limit
    beta_softmax: float = 1.0
    n_noise: int = 50                   # K samples for the softmax target
    batch_size: int = 8                 # episodes per gradient step
    episode_length: int = 40
    episodes: int = 500
    policy_delay: int = 2               # actor update every d training episodes
    replay_capacity: int = 512
    warmup_episodes: int = 10           # uniform-random episodes before acting
    selection: str = "critic"           # or "alternate"
    eval_every: int = 20
    eval_episodes: int = 4
    param_norm_limit: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if self.obs_dim < 1 or self.action_dim < 1:
            raise ConfigError("obs_dim and action_dim must be >= 1")
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not (0.0 < self.tau_soft <= 1.0):
            raise ConfigError(f"tau_soft must be in (0, 1], got {self.tau_soft}")
        if self.action_limit <= 0:
            raise ConfigError("action_limit must be positive")
        if self.policy_delay < 1:
            raise ConfigError("policy_delay must be >= 1")
        if self.n_noise < 1:
            raise ConfigError("n_noise must be >= 1")
        if self.beta_softmax < 0:
            raise ConfigError("beta_softmax must be >= 0")
        if self.selection not in ("critic", "alternate"):
            raise ConfigError(f"selection must be critic|alternate, got {self.selection}")
        for name in ("hidden_fc", "hidden_lstm", "hidden_merge", "batch_size",
                     "episode_length", "replay_capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.episodes < 0 or self.warmup_episodes < 0:
            raise ConfigError("episode counts must be >= 0")
        if self.explore_sigma is None:
            self.explore_sigma = 0.1 * self.action_limit
        if self.target_sigma is None:
            self.target_sigma = 0.2 * self.action_limit
        if self.noise_clip is None:
            self.noise_clip = 0.5 * self.action_limit
        if self.explore_sigma < 0 or self.target_sigma <= 0 or self.noise_clip <= 0:
            raise ConfigError("noise scales must be positive (explore may be 0)")


def td3_like_config(**kwargs):
    """Ablation: no softmax smoothing (beta=0, K=1), recurrence kept."""
    kwargs.setdefault("beta_softmax", 0.0)
    kwargs.setdefault("n_noise", 1)
    return AgentConfig(**kwargs)


def sd3_like_config(**kwargs):
    """Ablation: softmax targets kept, LSTM branch removed."""
    kwargs.setdefault("recurrent", False)
    return AgentConfig(**kwargs)


@dataclass
class Episode:
    """One whole trajectory; observations carry the terminal entry [T]."""

    observations: np.ndarray    # [T+1, obs_dim]
    actions: np.ndarray         # [T, action_dim]
    rewards: np.ndarray         # [T]
    dones: np.ndarray           # [T]; 1 only at the horizon step
    user: int = 0               # sub-environment tag when decomposed

    def __post_init__(self):
        T = len(self.rewards)
        if self.observations.shape[0] != T + 1 or self.actions.shape[0] != T:
            raise ConfigError("episode arrays disagree on length")


class EpisodeReplay:
    """Ring buffer of whole episodes; batches sample without replacement."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ConfigError("replay capacity must be >= 1")
        self.capacity = capacity
        self._store = []
        self._cursor = 0

    def __len__(self):
        return len(self._store)

    def add(self, episode):
        if len(self._store) < self.capacity:
            self._store.append(episode)
        else:
            self._store[self._cursor] = episode
            self._cursor = (self._cursor + 1) % self.capacity

    def clear(self):
        self._store = []
        self._cursor = 0

    def sample(self, rng, batch_size):
        if batch_size > len(self._store):
            raise ValueError(
                f"cannot draw {batch_size} episodes from a replay of {len(self._store)}")
        idx = rng.choice(len(self._store), size=batch_size, replace=False)
        return [self._store[i] for i in idx]


# ---------- networks ----------


class _DoubleBranch:
    """Shared wiring: FC branch + optional LSTM branch + merge layer."""

    def __init__(self, rng, fc_in, lstm_in, out_dim, cfg, name):
        self.recurrent = cfg.recurrent
        self.fc = ad.Dense(rng, fc_in, cfg.hidden_fc, f"{name}/fc")
        if cfg.recurrent:
            self.lstm = ad.LSTMCell(rng, lstm_in, cfg.hidden_lstm, f"{name}/lstm")
            merge_in = cfg.hidden_fc + cfg.hidden_lstm
        else:
            self.lstm = None
            merge_in = cfg.hidden_fc
        self.merge = ad.Dense(rng, merge_in, cfg.hidden_merge, f"{name}/merge")
        self.head = ad.Dense(rng, cfg.hidden_merge, out_dim, f"{name}/head")

    def init_state(self, batch):
        return self.lstm.init_state(batch) if self.recurrent else None

    def advance(self, obs, prev_action, state):
        """Feed (o_t, a_{t-1}) to the LSTM branch; returns the new state."""
        if not self.recurrent:
            return None
        x = ad.concat([obs, prev_action], axis=-1)
        return self.lstm.step(x, state[0], state[1])

    def _merged(self, fc_input, state):
        feats = [ad.tanh(self.fc(fc_input))]
        if self.recurrent:
            feats.append(state[0])
        return ad.tanh(self.merge(ad.concat(feats, axis=-1)))

    def parameters(self):
        params = self.fc.parameters() + self.merge.parameters() + self.head.parameters()
        if self.recurrent:
            params += self.lstm.parameters()
        return params


class Actor(_DoubleBranch):
    def __init__(self, rng, cfg, name):
        super().__init__(rng, cfg.obs_dim, cfg.obs_dim + cfg.action_dim,
                         cfg.action_dim, cfg, name)
        self.action_limit = cfg.action_limit

    def propose(self, obs, state):
        """Action in [0, limit]; state must already include slot t."""
        return ad.mul(ad.sigmoid(self.head(self._merged(obs, state))),
                      self.action_limit)


class Critic(_DoubleBranch):
    def __init__(self, rng, cfg, name):
        super().__init__(rng, cfg.obs_dim + cfg.action_dim,
                         cfg.obs_dim + cfg.action_dim, 1, cfg, name)

    def value(self, obs, action, state):
        """Q(h_t, a_t) as [batch, 1]; state must already include slot t."""
        return self.head(self._merged(ad.concat([obs, action], axis=-1), state))

    def value_tiled(self, obs_tiled, actions_tiled, hidden_tiled):
        """Head evaluation with pre-tiled recurrent features (target sampling)."""
        feats = [ad.tanh(self.fc(ad.concat([obs_tiled, actions_tiled], axis=-1)))]
        if self.recurrent:
            feats.append(hidden_tiled)
        z = ad.tanh(self.merge(ad.concat(feats, axis=-1)))
        return self.head(z)


# ---------- pure target math (unit-testable without networks) ----------


def noise_log_density(noise, sigma):
    """Log density of independent N(0, sigma) per action entry, summed."""
    noise = np.asarray(noise, dtype=float)
    return (-0.5 * (noise / sigma) ** 2
            - np.log(sigma * np.sqrt(2.0 * np.pi))).sum(axis=-1)


def softmax_weighted_value(q_values, log_density, beta):
    """Importance-weighted softmax average over the leading sample axis.

    weights w_k = exp(beta * q_k) / p_k, returned value = sum(w q) / sum(w),
    computed through a log-sum-exp shift so beta up to ~1e3 stays finite.
    beta = 0 gives the importance-weighted mean; K = 1 returns q itself.
    """
    q = np.asarray(q_values, dtype=float)
    logw = beta * q - np.asarray(log_density, dtype=float)
    logw = logw - logw.max(axis=0, keepdims=True)
    w = np.exp(logw)
    return (w * q).sum(axis=0) / w.sum(axis=0)


def bellman_targets(rewards, next_values, dones, gamma):
    """y_t = r_t + gamma * (1 - done_t) * V_{t+1}; arrays share shape."""
    rewards = np.asarray(rewards, dtype=float)
    return rewards + gamma * (1.0 - np.asarray(dones, dtype=float)) * \
        np.asarray(next_values, dtype=float)


# ---------- environment adapters ----------


class JointAdapter:
    """Presents a single-hop environment as a batch of one context."""

    def __init__(self, env):
        self.env = env

    n_contexts = 1

    @property
    def obs_dim(self):
        return self.env.obs_dim

    @property
    def action_dim(self):
        return self.env.action_dim

    def fork(self, seed):
        return JointAdapter(self.env.fork(seed))

    def reset(self, seed=None):
        return self.env.reset(seed)[None, :]

    def step(self, actions, lam=0.0):
        outcome = self.env.step(actions[0], lam=lam)
        return outcome.observation[None, :], np.array([outcome.reward]), outcome


class MultihopAdapter:
    """Single-context adapter over the multihop environment; `lam` may be a
    scalar or a node -> multiplier mapping."""

    def __init__(self, env):
        self.env = env

    n_contexts = 1

    @property
    def obs_dim(self):
        return self.env.obs_dim

    @property
    def action_dim(self):
        return self.env.action_dim

    def fork(self, seed):
        return MultihopAdapter(self.env.fork(seed))

    def reset(self, seed=None):
        return self.env.reset(seed)[None, :]

    def step(self, actions, lam=0.0):
        outcome = self.env.step(actions[0], multipliers=lam)
        return outcome.observation[None, :], np.array([outcome.reward]), outcome


class DecomposedAdapter:
    """Stacks the per-user views of a decomposed environment into arrays."""

    def __init__(self, denv):
        self.denv = denv

    @property
    def n_contexts(self):
        return self.denv.n_contexts

    @property
    def obs_dim(self):
        return self.denv.obs_dim

    @property
    def action_dim(self):
        return self.denv.action_dim

    def fork(self, seed):
        return DecomposedAdapter(self.denv.fork(seed))

    def reset(self, seed=None):
        return np.stack(self.denv.reset(seed))

    def step(self, actions, lam=0.0):
        obs_list, rewards, outcome = self.denv.step(actions, lam=lam)
        return np.stack(obs_list), np.asarray(rewards, dtype=float), outcome


def adapt(env):
    """Wrap a raw environment in the matching adapter; adapters pass through."""
    if hasattr(env, "n_contexts"):
        return env
    if hasattr(env, "flows"):
        return MultihopAdapter(env)
    return JointAdapter(env)


# ---------- the agent ----------


class Rsd4Agent:
    def __init__(self, config):
        self.cfg = config
        root = np.random.SeedSequence(config.seed)
        init_ss, sample_ss, explore_ss, eval_ss = root.spawn(4)
        rng = np.random.Generator(np.random.Philox(init_ss))
        self._rng_sample = np.random.Generator(np.random.Philox(sample_ss))
        self._rng_explore = np.random.Generator(np.random.Philox(explore_ss))
        self._eval_seed = int(eval_ss.generate_state(1)[0])

        self.actors = [Actor(rng, config, f"actor{i}") for i in (1, 2)]
        self.critics = [Critic(rng, config, f"critic{i}") for i in (1, 2)]
        self.target_actors = [Actor(rng, config, f"target_actor{i}") for i in (1, 2)]
        self.target_critics = [Critic(rng, config, f"target_critic{i}") for i in (1, 2)]
        for tgt, src in zip(self.target_actors + self.target_critics,
                            self.actors + self.critics):
            ad.soft_update(tgt.parameters(), src.parameters(), 1.0)

        self.actor_opts = [ad.Adam(a.parameters(), lr=config.actor_lr)
                           for a in self.actors]
        self.critic_opts = [ad.Adam(c.parameters(), lr=config.critic_lr)
                            for c in self.critics]
        self.replay = EpisodeReplay(config.replay_capacity)
        self._episodes_trained = 0
        self._episode_index = -1        # for "alternate" selection
        self._act_states = None
        self._prev_action = None

    # ----- behavior policy -----

    def reset_episode(self, batch=1):
        self._episode_index += 1
        self._prev_action = np.zeros((batch, self.cfg.action_dim))
        nets = self.actors + self.critics
        self._act_states = [net.init_state(batch) for net in nets]

    def act(self, obs, explore=False):
        """One behavior step for a [batch, obs_dim] observation block."""
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        if self._act_states is None or self._prev_action.shape[0] != obs.shape[0]:
            raise RuntimeError("call reset_episode(batch) before act()")
        with no_grad():
            o = Tensor(obs)
            prev = Tensor(self._prev_action)
            proposals, scores, new_states = [], [], []
            for i in (0, 1):
                sa = self.actors[i].advance(o, prev, self._act_states[i])
                sc = self.critics[i].advance(o, prev, self._act_states[2 + i])
                a_i = self.actors[i].propose(o, sa)
                q_i = self.critics[i].value(o, a_i, sc)
                proposals.append(a_i.data)
                scores.append(q_i.data[:, 0])
                new_states.extend([sa, sc])
            self._act_states = [new_states[0], new_states[2],
                                new_states[1], new_states[3]]
        if self.cfg.selection == "alternate":
            action = proposals[self._episode_index % 2].copy()
        else:
            pick = (scores[0] >= scores[1])[:, None]
            action = np.where(pick, proposals[0], proposals[1])
        if explore and self.cfg.explore_sigma > 0:
            action = action + self._rng_explore.normal(
                0.0, self.cfg.explore_sigma, size=action.shape)
        action = np.clip(action, 0.0, self.cfg.action_limit)
        self._prev_action = action
        return action

    # ----- rollouts -----

    def run_episode(self, env, lam=0.0, explore=True, random_actions=False):
        """Roll one environment episode; returns (episodes, stats) where
        episodes has one entry per context (N when decomposed, else 1)."""
        cfg = self.cfg
        B, T = env.n_contexts, cfg.episode_length
        obs = np.asarray(env.reset(), dtype=float)
        self.reset_episode(B)
        obs_seq = np.empty((T + 1, B, cfg.obs_dim))
        act_seq = np.empty((T, B, cfg.action_dim))
        rew_seq = np.empty((T, B))
        total_throughput = 0.0
        total_resource = 0.0
        node_resource = {}
        for t in range(T):
            obs_seq[t] = obs
            if random_actions:
                action = self._rng_explore.uniform(
                    0.0, cfg.action_limit, size=(B, cfg.action_dim))
            else:
                action = self.act(obs, explore=explore)
            obs, rewards, outcome = env.step(action, lam=lam)
            act_seq[t] = action
            rew_seq[t] = rewards
            total_throughput += outcome.throughput
            total_resource += outcome.resource
            for node, spend in getattr(outcome, "resource_per_node", {}).items():
                node_resource[node] = node_resource.get(node, 0.0) + spend
        obs_seq[T] = obs
        dones = np.zeros((T, B))
        dones[-1, :] = 1.0
        episodes = [Episode(obs_seq[:, j].copy(), act_seq[:, j].copy(),
                            rew_seq[:, j].copy(), dones[:, j].copy(), user=j)
                    for j in range(B)]
        stats = {"reward": float(rew_seq.sum()),
                 "throughput": total_throughput,
                 "resource": total_resource,
                 "resource_per_node": node_resource}
        return episodes, stats

    def evaluate(self, env, lam=0.0, episodes=None, seed=None):
        """Deterministic rollouts on a fork; means are per episode."""
        n = self.cfg.eval_episodes if episodes is None else episodes
        eval_env = env.fork(self._eval_seed if seed is None else seed)
        rewards, throughputs, resources = [], [], []
        node_totals = {}
        for _ in range(n):
            _, stats = self.run_episode(eval_env, lam=lam, explore=False)
            rewards.append(stats["reward"])
            throughputs.append(stats["throughput"])
            resources.append(stats["resource"])
            for node, spend in stats["resource_per_node"].items():
                node_totals[node] = node_totals.get(node, 0.0) + spend
        T = self.cfg.episode_length
        return {
            "reward": float(np.mean(rewards)),
            "throughput": float(np.mean(throughputs)),
            "resource": float(np.mean(resources)),
            "reward_per_slot": float(np.mean(rewards)) / T,
            "throughput_per_slot": float(np.mean(throughputs)) / T,
            "resource_per_slot": float(np.mean(resources)) / T,
            "resource_per_node_per_slot": {node: total / (n * T)
                                           for node, total in node_totals.items()},
        }

    # ----- batch assembly -----

    def _stack_batch(self, batch):
        obs = np.stack([e.observations for e in batch], axis=1)      # [T+1,B,D]
        actions = np.stack([e.actions for e in batch], axis=1)        # [T,B,A]
        rewards = np.stack([e.rewards for e in batch], axis=1)        # [T,B]
        dones = np.stack([e.dones for e in batch], axis=1)            # [T,B]
        prev = np.zeros((actions.shape[0] + 1,) + actions.shape[1:])  # [T+1,B,A]
        prev[1:] = actions
        return obs, actions, rewards, dones, prev

    # ----- updates -----

    def _soft_targets(self, obs, prev, rewards, dones, actor_index):
        """Bootstrap targets [T, B] from the frozen networks; no gradients."""
        cfg = self.cfg
        T1, B, _ = obs.shape
        T = T1 - 1
        ta = self.target_actors[actor_index]
        tc1, tc2 = self.target_critics
        next_values = np.empty((T, B))
        with no_grad():
            sa, s1, s2 = ta.init_state(B), tc1.init_state(B), tc2.init_state(B)
            for t in range(T + 1):
                o = Tensor(obs[t])
                p = Tensor(prev[t])
                sa = ta.advance(o, p, sa)
                s1 = tc1.advance(o, p, s1)
                s2 = tc2.advance(o, p, s2)
                if t == 0:
                    continue
                mu = ta.propose(o, sa).data
                eps = self._rng_sample.normal(
                    0.0, cfg.target_sigma, size=(cfg.n_noise, B, cfg.action_dim))
                eps = np.clip(eps, -cfg.noise_clip, cfg.noise_clip)
                cand = np.clip(mu[None] + eps, 0.0, cfg.action_limit)
                logp = noise_log_density(eps, cfg.target_sigma)       # [K,B]
                o_tiled = Tensor(np.tile(obs[t], (cfg.n_noise, 1)))
                a_tiled = Tensor(cand.reshape(cfg.n_noise * B, cfg.action_dim))
                q_pair = []
                for tc, s in ((tc1, s1), (tc2, s2)):
                    h = Tensor(np.tile(s[0].data, (cfg.n_noise, 1))) \
                        if cfg.recurrent else None
                    q = tc.value_tiled(o_tiled, a_tiled, h)
                    q_pair.append(q.data.reshape(cfg.n_noise, B))
                q_min = np.minimum(q_pair[0], q_pair[1])
                next_values[t - 1] = softmax_weighted_value(
                    q_min, logp, cfg.beta_softmax)
        return bellman_targets(rewards, next_values, dones, cfg.gamma)

    def critic_update(self, index, batch=None):
        """One Bellman regression step for critic `index`; returns the loss."""
        cfg = self.cfg
        if batch is None:
            batch = self.replay.sample(self._rng_sample, cfg.batch_size)
        obs, actions, rewards, dones, prev = self._stack_batch(batch)
        targets = self._soft_targets(obs, prev, rewards, dones, index)
        critic, opt = self.critics[index], self.critic_opts[index]
        opt.zero_grad()
        state = critic.init_state(obs.shape[1])
        q_cols = []
        for t in range(actions.shape[0]):
            o = Tensor(obs[t])
            state = critic.advance(o, Tensor(prev[t]), state)
            q_cols.append(critic.value(o, Tensor(actions[t]), state))
        q_mat = ad.concat(q_cols, axis=1)                 # [B, T]
        diff = ad.sub(q_mat, Tensor(targets.T))
        loss = ad.reduce_mean(ad.mul(diff, diff))
        loss.backward()
        opt.step()
        return float(loss.data)

    def actor_update(self, index, batch=None):
        """Deterministic policy gradient through the paired critic; returns
        the actor gradient norm.  Recurrent critic features come from the
        replayed action sequence, only the instantaneous action is the
        policy's."""
        cfg = self.cfg
        if batch is None:
            batch = self.replay.sample(self._rng_sample, cfg.batch_size)
        obs, actions, _, _, prev = self._stack_batch(batch)
        actor, critic = self.actors[index], self.critics[index]
        opt = self.actor_opts[index]
        opt.zero_grad()
        B = obs.shape[1]
        sa, sc = actor.init_state(B), critic.init_state(B)
        q_cols = []
        for t in range(actions.shape[0]):
            o = Tensor(obs[t])
            p = Tensor(prev[t])
            sa = actor.advance(o, p, sa)
            sc = critic.advance(o, p, sc)
            mu = actor.propose(o, sa)
            q_cols.append(critic.value(o, mu, sc))
        q_mat = ad.concat(q_cols, axis=1)
        loss = ad.mul(ad.reduce_sum(q_mat), -1.0 / B)     # time sum, batch mean
        loss.backward()
        norm = float(np.sqrt(sum(
            float((p.grad ** 2).sum()) for p in actor.parameters()
            if p.grad is not None)))
        opt.step()
        return norm

    def _update_targets(self):
        tau = self.cfg.tau_soft
        for tgt, src in zip(self.target_actors + self.target_critics,
                            self.actors + self.critics):
            ad.soft_update(tgt.parameters(), src.parameters(), tau)

    # ----- training loop -----

    def _check_divergence(self, eval_reward, checkpoint_dir):
        bad = not np.isfinite(eval_reward)
        if not bad:
            for net in self.actors + self.critics:
                for p in net.parameters():
                    if not np.all(np.isfinite(p.data)) or \
                            np.abs(p.data).max() > self.cfg.param_norm_limit:
                        bad = True
                        break
                if bad:
                    break
        if bad:
            path = self._emergency_checkpoint(checkpoint_dir)
            raise DivergenceError(
                f"training diverged (eval reward {eval_reward!r})", path)

    def _emergency_checkpoint(self, checkpoint_dir):
        if checkpoint_dir is None:
            return None
        os.makedirs(checkpoint_dir, exist_ok=True)
        return self.save(os.path.join(checkpoint_dir, "diverged"))

    def train(self, env, lam=0.0, episodes=None, curve_path=None,
              checkpoint_dir=None):
        """Run the training loop; returns the learning curve as a list of
        (episode, eval reward, resource, throughput) rows."""
        cfg = self.cfg
        env = adapt(env)
        M = cfg.episodes if episodes is None else episodes
        curve = []
        for ep in range(M):
            warm = ep < cfg.warmup_episodes
            eps, _ = self.run_episode(env, lam=lam, explore=True,
                                      random_actions=warm)
            for e in eps:
                self.replay.add(e)
            self._episodes_trained += 1
            try:
                if not warm and len(self.replay) >= cfg.batch_size:
                    self.critic_update(0)
                    self.critic_update(1)
                    if self._episodes_trained % cfg.policy_delay == 0:
                        self.actor_update(0)
                        self.actor_update(1)
                        self._update_targets()
            except FloatingPointError as exc:
                path = self._emergency_checkpoint(checkpoint_dir)
                raise DivergenceError(str(exc), path) from exc
            if (ep + 1) % cfg.eval_every == 0 or ep == M - 1:
                stats = self.evaluate(env, lam=lam)
                self._check_divergence(stats["reward"], checkpoint_dir)
                curve.append((ep + 1, stats["reward"], stats["resource"],
                              stats["throughput"]))
        if curve_path is not None:
            with open(curve_path, "w") as fh:
                fh.write("episode,reward,resource,throughput\n")
                for row in curve:
                    fh.write("%d,%.12g,%.12g,%.12g\n" % row)
        return curve

    # ----- checkpoints -----

    def _all_networks(self):
        return self.actors + self.critics + self.target_actors + self.target_critics

    def parameter_map(self):
        arrays = {}
        for net in self._all_networks():
            for p in net.parameters():
                arrays[p.name] = p.data
        return arrays

    def save(self, path, extra_meta=None):
        meta = {"config": dataclasses.asdict(self.cfg),
                "episodes_trained": self._episodes_trained}
        if extra_meta:
            meta.update(extra_meta)
        return ad.save_checkpoint(path, self.parameter_map(), meta)

    def load_weights(self, path):
        arrays, meta = ad.load_checkpoint(path)
        for net in self._all_networks():
            for p in net.parameters():
                if p.name not in arrays:
                    raise KeyError(f"checkpoint missing parameter {p.name}")
                if arrays[p.name].shape != p.data.shape:
                    raise ValueError(
                        f"checkpoint shape mismatch for {p.name}: "
                        f"{arrays[p.name].shape} vs {p.data.shape}")
                p.data = arrays[p.name].astype(float).copy()
        return meta

    @classmethod
    def restore(cls, path):
        _, meta = ad.load_checkpoint(path)
        agent = cls(AgentConfig(**meta["config"]))
        agent.load_weights(path)
        agent._episodes_trained = int(meta.get("episodes_trained", 0))
        return agent, meta
