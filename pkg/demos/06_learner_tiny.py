"""Train the recurrent actor-critic on the tiny instance, exact answer known.

A short run (about a minute); the 12-check gate trains the same setup to
within 10% of the exact gain.

Run: python3 demos/06_learner_tiny.py
"""

from schedlab import (AgentConfig, BernoulliArrivals, DpConfig, MarkovChannel,
                      Rsd4Agent, SingleHopEnv, UserSpec, dp_optimal)
from schedlab.agent import JointAdapter


def tiny_env(seed=0):
    user = UserSpec(index=1, deadline=1, weight=1.0, distance=1.0,
                    arrivals=BernoulliArrivals(0.5),
                    channel=MarkovChannel(levels=(1.0, 2.0), mean=1.5,
                                          persistence=0.5))
    return SingleHopEnv([user], e_max=1.0, seed=seed)


def main():
    lam = 0.3
    env = tiny_env()
    exact = dp_optimal(env.users, env.e_max, lam,
                       config=DpConfig(grid=(0.0, 1.0))).evaluate()[0]
    print(f"exact optimal gain at lambda={lam}: {exact:.4f}/slot\n")

    adapter = JointAdapter(env)
    cfg = AgentConfig(obs_dim=adapter.obs_dim, action_dim=adapter.action_dim,
                      action_limit=env.e_max, hidden_fc=16, hidden_lstm=16,
                      hidden_merge=16, n_noise=8, batch_size=8,
                      episode_length=48, episodes=200, warmup_episodes=25,
                      eval_every=20, eval_episodes=4, seed=0)
    agent = Rsd4Agent(cfg)
    print("training 200 episodes of 48 slots (first 25 random exploration):")
    curve = agent.train(adapter, lam=lam)
    for ep, reward, resource, throughput in curve:
        per_slot = reward / cfg.episode_length
        frac = per_slot / exact
        print(f"  episode {ep:>3}: eval reward {per_slot:.4f}/slot "
              f"({frac:5.1%} of exact)")

    stats = agent.evaluate(adapter, lam=lam, episodes=100)
    print(f"\nfinal evaluation over 100 episodes: "
          f"{stats['reward_per_slot']:.4f}/slot "
          f"({stats['reward_per_slot'] / exact:.1%} of exact)")
    print("the acceptance gate runs the same setup at 300 episodes, which "
          "reliably clears 90%.")


if __name__ == "__main__":
    main()
