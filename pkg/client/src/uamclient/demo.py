"""Drive a uamsim server with a uniform random policy and print episode rewards."""

import argparse
import random
import sys

from .remote_env import connect


def demo_random_policy(host="127.0.0.1", port=9000, episodes=1, seed=0):
    """Run until `episodes` episodes have completed across the batch.

    Episode returns are accumulated client-side from the reward stream; the
    server auto-resets finished environments, so the batch keeps running.
    Returns the list of (reward, steps, term) tuples in completion order.
    """
    rng = random.Random(seed)
    completed = []
    with connect(host, port) as env:
        print(f"connected: {env.n_envs} envs, obs_dim {env.obs_dim}, "
              f"dt {env.dt}, max_steps {env.max_steps}")
        env.reset(seed)
        returns = [0.0] * env.n_envs
        steps = [0] * env.n_envs
        while len(completed) < episodes:
            actions = [[rng.uniform(-1.0, 1.0) for _ in range(env.action_dim)]
                       for _ in range(env.n_envs)]
            _, rewards, dones, terms = env.step(actions)
            for i in range(env.n_envs):
                returns[i] += rewards[i]
                steps[i] += 1
                if dones[i]:
                    completed.append((returns[i], steps[i], terms[i]))
                    print(f"episode {len(completed)}: reward={returns[i]:.3f} "
                          f"steps={steps[i]} term={terms[i]}")
                    returns[i] = 0.0
                    steps[i] = 0
                    if len(completed) >= episodes:
                        break
    return completed[:episodes]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uam-remote-demo",
        description="random-policy driver for a uamsim environment server")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9000)
    parser.add_argument("--episodes", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        demo_random_policy(args.host, args.port, args.episodes, args.seed)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
