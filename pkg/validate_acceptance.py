#!/usr/bin/env python3
"""
Acceptance Validation Script
Runs the desk-scale experiments and checks the qualitative orderings between
unrestricted, baseline-only and shielded training, for both the DQN and the
actor-critic agent. Not part of the unit suite:
a full pass trains several 200-episode experiments over 6 seeds.
"""

import argparse
import os
import sys
import traceback

import numpy as np

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from config import N_SEEDS, N_TRAIN_EPISODES, SYNTH_SAMPLES
from experiment_config import ExperimentConfig
from harness import run_experiment, synthesize_dataset, train_baseline_file, train_predictor_file
from metrics import AGGREGATED_FILE, compare_runs, read_csv
from radio_sim import SimConfig

EARLY_EPISODES = 25
MULTI_BASELINE_EPISODES = 50
REWARD_TOLERANCE = 0.05
WEAK_SAMPLES = 200
WEAK_EPOCHS = 1


class AcceptanceContext:
    """Shared work directory, trained model files and a cache of finished runs."""

    def __init__(self, work_dir, n_episodes=N_TRAIN_EPISODES, seeds=None):
        self.work_dir = work_dir
        self.n_episodes = n_episodes
        self.seeds = list(range(N_SEEDS)) if seeds is None else seeds
        self.sim = SimConfig()
        self.runs = {}
        self.models = {}

    def path(self, name):
        return os.path.join(self.work_dir, name)

    def prepare_models(self):
        if self.models:
            return self.models
        os.makedirs(self.work_dir, exist_ok=True)
        data = self.path('dataset.csv')
        weak_data = self.path('dataset_small.csv')
        synthesize_dataset(self.sim, SYNTH_SAMPLES, 0, data)
        synthesize_dataset(self.sim, WEAK_SAMPLES, 1, weak_data)

        self.models = {
            'predictor': self.path('predictor.mlp'),
            'weak_model': self.path('baseline_weak.mlp'),
        }
        train_predictor_file(data, self.models['predictor'])
        train_baseline_file(weak_data, self.models['weak_model'], epochs=WEAK_EPOCHS)
        return self.models

    def run(self, name, **overrides):
        """Run (or reuse) one experiment and return its output directory."""
        if name not in self.runs:
            settings = dict(
                seeds=self.seeds,
                n_train_episodes=self.n_episodes,
                n_eval_episodes=0,
                log_level='WARNING',
                output_dir=self.path(name),
                sim=self.sim,
            )
            settings.update(overrides)
            summary = run_experiment(ExperimentConfig(**settings))
            self.runs[name] = summary.output_dir
        return self.runs[name]

    def seed_rewards(self, name, n_episodes):
        """Mean reward over the first n_episodes of each seed."""
        run_dir = self.runs[name]
        return {
            seed: float(read_csv(os.path.join(run_dir, f'seed_{seed}.csv'))['reward'].iloc[:n_episodes].mean())
            for seed in self.seeds
        }

    def aggregated(self, name):
        return read_csv(os.path.join(self.runs[name], AGGREGATED_FILE))


def required_seeds(ctx):
    # 5 of 6 at desk scale
    return int(np.ceil(len(ctx.seeds) * 5 / 6))


def test_unrestricted_starts_below_rule(ctx):
    """Unrestricted DQN starts off below the rule-based baseline"""
    print("\n📉 Testing unrestricted start vs rule baseline...")

    ctx.run('rule', scenario='baseline-only')
    ctx.run('unrestricted_dqn', scenario='unrestricted-dqn')
    rule = ctx.seed_rewards('rule', EARLY_EPISODES)
    dqn = ctx.seed_rewards('unrestricted_dqn', EARLY_EPISODES)

    wins = sum(dqn[s] < rule[s] for s in ctx.seeds)
    for s in ctx.seeds:
        print(f"   seed {s}: dqn {dqn[s]:.4f}  rule {rule[s]:.4f}")
    if wins >= required_seeds(ctx):
        print(f"✅ Unrestricted DQN below rule in {wins}/{len(ctx.seeds)} seeds")
        return True
    print(f"❌ Unrestricted DQN below rule in only {wins}/{len(ctx.seeds)} seeds")
    return False


def test_predictor_shield_mimics_rule(ctx):
    """Predictor-shielded DQN stays close to the rule baseline from the start"""
    print("\n🛡️  Testing predictor shield early reward...")

    models = ctx.prepare_models()
    ctx.run('rule', scenario='baseline-only')
    ctx.run('predictor_shield', scenario='predictor-shield', predictor_path=models['predictor'])
    rule = ctx.seed_rewards('rule', EARLY_EPISODES)
    shielded = ctx.seed_rewards('predictor_shield', EARLY_EPISODES)

    ok = sum(shielded[s] >= rule[s] - REWARD_TOLERANCE for s in ctx.seeds)
    if ok >= required_seeds(ctx):
        print(f"✅ Predictor shield within {REWARD_TOLERANCE} of rule in {ok}/{len(ctx.seeds)} seeds")
        return True
    print(f"❌ Predictor shield within {REWARD_TOLERANCE} of rule in only {ok}/{len(ctx.seeds)} seeds")
    return False


def test_k_shield_hands_over(ctx):
    """k decays and executed actions shift from the baseline to the agent"""
    print("\n🔁 Testing k-shield hand-over...")

    ctx.run('k_shield', scenario='k-shield', d=0.1, w=2)
    aggregated = ctx.aggregated('k_shield')
    k_mean = aggregated['k_mean'].to_numpy()
    fraction = aggregated['source_fraction_agent'].to_numpy()

    checks = {
        'k_mean non-increasing': bool(np.all(np.diff(k_mean) <= 1e-12)),
        'k_mean < 0.5 at the end': bool(k_mean[-1] < 0.5),
        'agent fraction < 0.2 early': bool(fraction[:10].mean() < 0.2),
        'agent fraction > 0.6 late': bool(fraction[-50:].mean() > 0.6),
    }
    for label, passed in checks.items():
        print(f"   {'✅' if passed else '❌'} {label}")
    print(f"   final k_mean {k_mean[-1]:.3f}, late agent fraction {fraction[-50:].mean():.3f}")
    return all(checks.values())


def test_actor_critic_variants(ctx):
    """The same orderings hold with the actor-critic agent, reported next to DQN"""
    print("\n🎭 Testing actor-critic variants...")

    models = ctx.prepare_models()
    ctx.run('rule', scenario='baseline-only')
    predictor = {'predictor_path': models['predictor']}
    pairs = {
        'unrestricted': (('unrestricted_dqn', dict(scenario='unrestricted-dqn')),
                         ('unrestricted_ac', dict(scenario='unrestricted-ac'))),
        'predictor shield': (('predictor_shield', dict(scenario='predictor-shield', **predictor)),
                             ('predictor_shield_ac', dict(scenario='predictor-shield', agent_kind='ac', **predictor))),
        'k-shield': (('k_shield', dict(scenario='k-shield', d=0.1, w=2)),
                     ('k_shield_ac', dict(scenario='k-shield', agent_kind='ac', d=0.1, w=2))),
    }
    for runs in pairs.values():
        for name, overrides in runs:
            ctx.run(name, **overrides)

    rule = ctx.seed_rewards('rule', EARLY_EPISODES)
    print(f"   {'':18}{'dqn':>10}{'ac':>10}   (first {EARLY_EPISODES} episodes, rule {np.mean(list(rule.values())):.4f})")
    for label, ((dqn_name, _), (ac_name, _)) in pairs.items():
        dqn = np.mean(list(ctx.seed_rewards(dqn_name, EARLY_EPISODES).values()))
        ac = np.mean(list(ctx.seed_rewards(ac_name, EARLY_EPISODES).values()))
        print(f"   {label:18}{dqn:>10.4f}{ac:>10.4f}")

    unrestricted = ctx.seed_rewards('unrestricted_ac', EARLY_EPISODES)
    shielded = ctx.seed_rewards('predictor_shield_ac', EARLY_EPISODES)
    k_mean = ctx.aggregated('k_shield_ac')['k_mean'].to_numpy()
    checks = {
        'unrestricted AC below rule': sum(unrestricted[s] < rule[s] for s in ctx.seeds) >= required_seeds(ctx),
        'predictor-shielded AC near rule':
            sum(shielded[s] >= rule[s] - REWARD_TOLERANCE for s in ctx.seeds) >= required_seeds(ctx),
        'AC k_mean non-increasing': bool(np.all(np.diff(k_mean) <= 1e-12)),
    }
    for label, passed in checks.items():
        print(f"   {'✅' if passed else '❌'} {label}")
    return all(checks.values())


def test_multi_baseline_predictor(ctx):
    """Predictor shield picks the better of a strong and a weakened baseline"""
    print("\n⚖️  Testing multi-baseline predictor shield...")

    models = ctx.prepare_models()
    weak_spec = f"model:{models['weak_model']}"
    ctx.run('rule', scenario='baseline-only')
    ctx.run('weak_model', scenario='baseline-only', baselines=[weak_spec])
    ctx.run('multi_predictor', scenario='predictor-shield', baselines=['rule', weak_spec],
            predictor_path=models['predictor'])

    def mean_over_seeds(name):
        return float(np.mean(list(ctx.seed_rewards(name, MULTI_BASELINE_EPISODES).values())))

    rule, weak, shielded = mean_over_seeds('rule'), mean_over_seeds('weak_model'), mean_over_seeds('multi_predictor')
    stronger, weaker = max(rule, weak), min(rule, weak)
    print(f"   rule {rule:.4f}  weak model {weak:.4f}  shielded {shielded:.4f}")
    if shielded >= weaker and shielded >= stronger - REWARD_TOLERANCE:
        print("✅ Shield tracks the stronger baseline")
        return True
    print("❌ Shield falls behind the stronger baseline")
    return False


def test_k_shield_weights(ctx):
    """Weighting the stronger baseline converges faster"""
    print("\n🎚️  Testing k-shield baseline weights...")

    models = ctx.prepare_models()
    baselines = ['rule', f"model:{models['weak_model']}"]
    ctx.run('k_favour_rule', scenario='k-shield', baselines=baselines, b=[0.9, 0.1])
    ctx.run('k_favour_model', scenario='k-shield', baselines=baselines, b=[0.1, 0.9])

    def cumulative(name):
        return float(np.sum(ctx.aggregated(name)['reward_mean'].iloc[:MULTI_BASELINE_EPISODES]))

    favour_rule, favour_model = cumulative('k_favour_rule'), cumulative('k_favour_model')
    print(f"   b=(0.9, 0.1): {favour_rule:.3f}  b=(0.1, 0.9): {favour_model:.3f}")
    if favour_rule >= favour_model:
        print("✅ Favouring the rule baseline accumulates more reward")
        return True
    print("❌ Favouring the rule baseline accumulates less reward")
    return False


def test_capacity_neutral(ctx):
    """Tilts leave the capacity KPI essentially unchanged"""
    print("\n📶 Testing capacity neutrality...")

    if not ctx.runs:
        ctx.run('rule', scenario='baseline-only')
    worst = 0.0
    for name in ctx.runs:
        cap = ctx.aggregated(name)['cap_mean']
        spread = float(cap.max() - cap.min())
        worst = max(worst, spread)
        print(f"   {name}: cap_mean range {spread:.4f}")
    if worst < 0.05:
        print("✅ Capacity range below 0.05 in every run")
        return True
    print(f"❌ Capacity range reached {worst:.4f}")
    return False


def test_determinism(ctx):
    """Repeated runs write byte-identical aggregated metrics"""
    print("\n🔒 Testing end-to-end determinism...")

    outputs = []
    for name in ('repeat_a', 'repeat_b'):
        run_dir = ctx.run(name, scenario='k-shield', seeds=ctx.seeds[:2], n_train_episodes=10)
        with open(os.path.join(run_dir, AGGREGATED_FILE), 'rb') as f:
            outputs.append(f.read())
    if outputs[0] == outputs[1]:
        print("✅ aggregated.csv is byte-identical")
        return True
    print("❌ aggregated.csv differs between identical runs")
    return False


def run_sweep(ctx):
    """k-shield over d x w, reported against the rule baseline on early episodes"""
    print("\n🧪 Running k-shield d/w sweep...")

    rule_dir = ctx.run('rule', scenario='baseline-only')
    run_dirs = [rule_dir]
    for d in (0.1, 0.2):
        for w in (2, 5):
            run_dirs.append(ctx.run(f'sweep_d{d}_w{w}', scenario='k-shield', d=d, w=w))

    comparison = compare_runs(run_dirs, 'reward')
    comparison.write(ctx.path('sweep_comparison.csv'))
    for label in comparison.table.columns[1:len(run_dirs) + 1]:
        print(f"   {label}: first {EARLY_EPISODES} episodes {comparison.table[label].iloc[:EARLY_EPISODES].mean():.4f}")
    print(comparison.summary.to_string(index=False))
    return True


def build_parser():
    parser = argparse.ArgumentParser(description='Desk-scale acceptance experiments')
    parser.add_argument('--work-dir', default='runs/acceptance')
    parser.add_argument('--episodes', type=int, default=N_TRAIN_EPISODES)
    parser.add_argument('--seeds', type=int, default=N_SEEDS)
    parser.add_argument('--sweep', action='store_true', help='also run the k-shield d/w sweep')
    return parser


def main(argv=None):
    """Run all acceptance checks"""
    args = build_parser().parse_args(argv)
    ctx = AcceptanceContext(args.work_dir, n_episodes=args.episodes, seeds=list(range(args.seeds)))

    print("🚀 Acceptance Validation")
    print("=" * 50)

    tests = [
        ("Unrestricted start", test_unrestricted_starts_below_rule),
        ("Predictor shield", test_predictor_shield_mimics_rule),
        ("k-shield hand-over", test_k_shield_hands_over),
        ("Actor-critic variants", test_actor_critic_variants),
        ("Multi-baseline predictor", test_multi_baseline_predictor),
        ("k-shield weights", test_k_shield_weights),
        ("Capacity neutrality", test_capacity_neutral),
        ("Determinism", test_determinism),
    ]
    if args.sweep:
        tests.append(("d/w sweep", run_sweep))

    results = []
    for test_name, test_func in tests:
        try:
            results.append(test_func(ctx))
        except Exception as e:
            print(f"❌ {test_name} crashed: {e}")
            traceback.print_exc()
            results.append(False)

    # Summary
    print("\n" + "=" * 50)
    print("📊 VALIDATION SUMMARY")
    print("=" * 50)

    passed = sum(results)
    total = len(results)

    for (test_name, _), result in zip(tests, results):
        status = "✅ PASS" if result else "❌ FAIL"
        print(f"{status}  {test_name}")

    print(f"\n🎯 Overall Result: {passed}/{total} tests passed")

    if passed == total:
        print("🎉 ALL ACCEPTANCE CHECKS PASSED!")
        return 0
    print("⚠️  Some acceptance checks failed.")
    return 1


if __name__ == "__main__":
    sys.exit(main())
