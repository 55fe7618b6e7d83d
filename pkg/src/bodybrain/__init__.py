"""Co-evolution of modular robot bodies and CPG brains with infant learning."""

from .cppn import CppnGenome, cppn_eval, crossover, mutate, random_genome
from .morphology import MorphDescriptors, Morphology, compute_descriptors, decode_body
from .cpg_controller import CpgNetwork, apply_steering, build_cpg, output_signal, steering_gain, step_cpg
from .locomotion_sim import SimConfig, Trajectory, displacement_velocity, simulate
from .fitness import FitnessComponents, aggregate_fitness, deviation_angle, fitness, fitness_components
from .revde_learner import Archive, LearnerParams, knn_predict, learn, revde_triplet, uniform_crossover
from .evolution import EvoParams, Individual, Mode, run_evolution

__version__ = "0.1.0"
