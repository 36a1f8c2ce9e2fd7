"""Per-user decomposition: one small agent, any number of users.

Run: python3 demos/08_decomposition.py
"""

import numpy as np

from schedlab import (AgentConfig, BernoulliArrivals, DecomposedEnv,
                      MarkovChannel, Rsd4Agent, SingleHopEnv, UserSpec)
from schedlab.agent import DecomposedAdapter, JointAdapter


def build_env(n_users, seed=0):
    users = [UserSpec(index=i + 1, deadline=2, weight=1.0, distance=1.0,
                      arrivals=BernoulliArrivals(0.5),
                      channel=MarkovChannel(levels=(1.0, 2.0), mean=1.5,
                                            persistence=0.5))
             for i in range(n_users)]
    return SingleHopEnv(users, e_max=1.0, seed=seed)


def agent_size(obs_dim, action_dim):
    cfg = AgentConfig(obs_dim=obs_dim, action_dim=action_dim,
                      action_limit=1.0, hidden_fc=16, hidden_lstm=16,
                      hidden_merge=16, seed=0)
    agent = Rsd4Agent(cfg)
    return sum(np.asarray(v).size for v in agent.parameter_map().values())


def main():
    print("joint view: observation and action widths grow with the "
          "population\n")
    print(f"{'users':>6}{'joint obs':>11}{'joint act':>11}"
          f"{'sub obs':>9}{'sub act':>9}{'agent params':>14}")
    for n in (2, 4, 40, 400):
        joint = JointAdapter(build_env(n))
        sub = DecomposedAdapter(DecomposedEnv(build_env(n)))
        print(f"{n:>6}{joint.obs_dim:>11}{joint.action_dim:>11}"
              f"{sub.obs_dim:>9}{sub.action_dim:>9}"
              f"{agent_size(sub.obs_dim, sub.action_dim):>14}")

    print("\nthe decomposed view hands the same small agent one user at a "
          "time\n(an index feature tells users apart), so the parameter "
          "count is flat in N.")

    print("\nper-user rewards still add up to the joint reward:")
    denv = DecomposedEnv(build_env(3, seed=5))
    denv.reset()
    rng = np.random.default_rng(2)
    pad = denv.pad_deadline
    for t in range(3):
        actions = rng.uniform(0.0, 1.0, size=(3, pad + 1))
        _, rewards, outcome = denv.step(actions, lam=0.4)
        rewards = np.asarray(rewards)
        print(f"  slot {t}: per-user {np.round(rewards, 4)} "
              f"sum {rewards.sum():.4f} == joint {outcome.reward:.4f}")


if __name__ == "__main__":
    main()
