import json
import shutil

import numpy as np
import pytest

from bodybrain.cppn import InnovationTracker, random_genome
from bodybrain.evolution import (
    EvoParams,
    Individual,
    develop,
    Mode,
    evaluate_individual,
    genealogy_dot,
    load_checkpoint,
    nominal_evaluation_counts,
    random_individual,
    reproduce,
    run_evolution,
    select_parents,
    select_survivors,
    stats_csv,
    tournament,
)
from bodybrain.revde_learner import LearnerParams
from bodybrain.locomotion_sim import SimConfig

from conftest import constant_genome

SMALL_LEARNER = LearnerParams(population=4, iterations=1)


def stub(i, fitness=0.0, generation=0):
    return Individual(i, (), random_genome(4, 5, i), random_genome(6, 1, i), generation, fitness_after=fitness)


def small(mode=Mode.EVOLUTION_ONLY, seed=0, generations=3):
    return EvoParams(population=8, offspring=4, generations=generations, mode=mode, learner=SMALL_LEARNER, seed=seed)


@pytest.fixture(scope="module")
def eo_run():
    return run_evolution(small(generations=4))


@pytest.fixture(scope="module")
def learning_run():
    return run_evolution(small(Mode.LEARNING, seed=1))


def test_tournament_picks_fitter():
    pop = [stub(0, 5.0), stub(1, 1.0)]
    # the 1 only wins when drawn twice
    rng = np.random.default_rng(0)
    picks = [tournament(pop, rng).id for _ in range(2000)]
    assert picks.count(0) / len(picks) == pytest.approx(0.75, abs=0.03)


def test_uniform_population_selects_uniformly():
    pop = [stub(i) for i in range(10)]
    rng = np.random.default_rng(42)
    counts = np.bincount([tournament(pop, rng).id for _ in range(10_000)], minlength=10)
    chi2 = float(np.sum((counts - 1000.0) ** 2 / 1000.0))
    assert chi2 < 21.67  # 99th percentile, 9 degrees of freedom


def test_select_parents_count(rng):
    pop = [stub(i, float(i)) for i in range(6)]
    assert len(select_parents(pop, rng, 50)) == 50


def test_survivors_top_parents_plus_offspring():
    parents = [stub(i, f) for i, f in enumerate([9, 7, 5, 3])]
    offspring = [stub(10, 0.0), stub(11, -1.0)]
    kept = select_survivors(parents, offspring, 4)
    assert [i.id for i in kept] == [0, 1, 10, 11]


def test_survivor_ties_prefer_lower_id():
    parents = [stub(3, 1.0), stub(1, 1.0), stub(2, 1.0)]
    kept = select_survivors(parents, [stub(9)], 3)
    assert [i.id for i in kept] == [1, 2, 9]


def test_reproduce_without_variation_copies_parent_a(rng):
    a, b = random_individual(0, rng), random_individual(1, rng)
    params = EvoParams(population=4, offspring=2, mutation=0.0, crossover=0.0)
    trackers = {"body": InnovationTracker(4, 5), "brain": InnovationTracker(6, 1)}
    child = reproduce((a, b), rng, trackers, params, 5, 1)
    assert child.body == a.body and child.brain == a.brain
    assert child.parents == (0, 1)
    assert np.array_equal(child.inherited, a.inherited)


def test_evolution_only_has_zero_delta(rng):
    ind = random_individual(0, rng)
    out = evaluate_individual(ind, Mode.EVOLUTION_ONLY, LearnerParams(), SimConfig(), 0)
    assert out.fitness_after == out.fitness_before
    assert out.evaluations == 3


def test_zero_joint_body_scores_zero():
    ind = develop(Individual(0, (), constant_genome(4, 5, [1, 0, 0, 0, 0]), random_genome(6, 1, 0), 0))
    assert ind.inherited.size == 0
    out = evaluate_individual(ind, Mode.LEARNING, LearnerParams(), SimConfig(), 0)
    assert (out.fitness_before, out.fitness_after) == (0.0, 0.0)


def test_learning_budget_in_simulations():
    rng = np.random.default_rng(3)
    while True:
        ind = random_individual(0, rng)
        if ind.inherited.size:
            break
    out = evaluate_individual(ind, Mode.LEARNING, LearnerParams(), SimConfig(), 0)
    assert out.evaluations == 330
    assert out.fitness_after >= out.fitness_before


def test_population_size_constant(eo_run):
    assert len(eo_run.population) == 8
    assert [row["generation"] for row in eo_run.stats] == [0, 1, 2, 3, 4]
    assert len(eo_run.individuals) == 8 + 4 * 4


def test_max_fitness_non_decreasing(eo_run, learning_run):
    for run in (eo_run, learning_run):
        best = [row["max_fitness"] for row in run.stats]
        assert all(b >= a for a, b in zip(best, best[1:]))


def test_learning_delta_nonnegative(learning_run):
    assert all(i.delta >= 0.0 for i in learning_run.individuals.values())
    assert all(row["mean_delta"] >= 0.0 for row in learning_run.stats)


def test_evolution_only_delta_zero(eo_run):
    assert all(i.delta == 0.0 for i in eo_run.individuals.values())


def test_genealogy_is_dag(eo_run):
    inds = eo_run.individuals
    for ind in inds.values():
        if ind.generation == 0:
            assert ind.parents == ()
            continue
        assert 1 <= len(ind.parents) <= 2
        assert all(inds[p].generation < ind.generation for p in ind.parents)


def test_evaluation_count_formula(eo_run):
    assert eo_run.evaluations == (8 + 4 * 4) * 3
    assert eo_run.stats[-1]["evaluations"] == eo_run.evaluations
    counts = nominal_evaluation_counts(EvoParams())
    assert counts == {"all_robots": 4800, "offspring_formula": 4650}


def test_same_seed_same_stats(eo_run):
    again = run_evolution(small(generations=4))
    assert stats_csv(again.stats) == stats_csv(eo_run.stats)
    assert genealogy_dot(again.individuals) == genealogy_dot(eo_run.individuals)


def test_different_seed_differs(eo_run):
    other = run_evolution(small(generations=4, seed=9))
    assert stats_csv(other.stats) != stats_csv(eo_run.stats)


def test_resume_matches_uninterrupted(tmp_path):
    params = small(Mode.LEARNING, seed=5, generations=3)
    ckpt = tmp_path / "checkpoint.json"
    saved = tmp_path / "after_gen1.json"

    def snapshot(row):
        if row["generation"] == 1:
            shutil.copy(ckpt, saved)

    full = run_evolution(params, checkpoint=ckpt, on_generation=snapshot)
    assert load_checkpoint(ckpt)["generation"] == 3
    shutil.copy(saved, ckpt)
    resumed = run_evolution(params, checkpoint=ckpt, resume=True)
    assert stats_csv(resumed.stats) == stats_csv(full.stats)
    assert genealogy_dot(resumed.individuals) == genealogy_dot(full.individuals)


def test_resume_rejects_other_params(tmp_path):
    ckpt = tmp_path / "c.json"
    run_evolution(small(generations=1), checkpoint=ckpt)
    with pytest.raises(ValueError):
        run_evolution(small(generations=2, seed=4), checkpoint=ckpt, resume=True)


def test_worker_processes_match_serial(learning_run):
    parallel = run_evolution(small(Mode.LEARNING, seed=1), workers=2)
    assert stats_csv(parallel.stats) == stats_csv(learning_run.stats)


def test_params_round_trip():
    p = small(Mode.LEARNING)
    assert EvoParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p
    with pytest.raises(ValueError):
        EvoParams(population=4, offspring=5)


def test_dot_export(eo_run):
    text = genealogy_dot(eo_run.individuals)
    nodes = [l for l in text.splitlines() if "fillcolor" in l]
    edges = [l for l in text.splitlines() if "->" in l]
    assert len(nodes) == len(eo_run.individuals)
    assert len(edges) == sum(len(i.parents) for i in eo_run.individuals.values())
