"""Metagenomic contig binning with Markov models and Chernoff information."""
from .markov import (
    DNA,
    Alphabet,
    Contig,
    InvalidInput,
    JointDistribution,
    MarkovModel,
    conditional_entropy,
    conditional_relative_entropy,
    empirical_type,
    l1_distance,
    sequence_log_probability,
    sequence_log_probability_linear,
)
from .chernoff import ChernoffResult, DegenerateInput, chernoff_information, min_pairwise_chernoff
from .simulator import CommunitySpec, generate_contigs
from .binning import BinAssignment, Metric, algorithm1, score

__version__ = "0.1.0"

__all__ = [
    "DNA", "Alphabet", "Contig", "InvalidInput", "JointDistribution", "MarkovModel",
    "conditional_entropy", "conditional_relative_entropy", "empirical_type", "l1_distance",
    "sequence_log_probability", "sequence_log_probability_linear",
    "ChernoffResult", "DegenerateInput", "chernoff_information", "min_pairwise_chernoff",
    "CommunitySpec", "generate_contigs", "BinAssignment", "Metric", "algorithm1", "score",
]
