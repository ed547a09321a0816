"""Witnesses, lower bounds and uniqueness conditions for generalized round-rank."""

from grrmf.analysis.lemmas import LemmaReport, check_lemma_suite
from grrmf.analysis.rank1 import Rank1Result, rank1_grf_representable
from grrmf.analysis.structures import StructureReport, rank_lower_bound_structures, structure_report
from grrmf.analysis.threshold import ThresholdDemoReport, threshold_bound_demo
from grrmf.analysis.uniqueness import (
    Counterexample,
    EntryRecord,
    UniquenessReport,
    find_counterexample,
    refit_agreement,
    uniqueness_check,
)
from grrmf.analysis.witness import GrrWitness, verify_witness

__all__ = [
    "Counterexample",
    "EntryRecord",
    "GrrWitness",
    "LemmaReport",
    "Rank1Result",
    "StructureReport",
    "ThresholdDemoReport",
    "UniquenessReport",
    "check_lemma_suite",
    "find_counterexample",
    "rank1_grf_representable",
    "rank_lower_bound_structures",
    "refit_agreement",
    "structure_report",
    "threshold_bound_demo",
    "uniqueness_check",
    "verify_witness",
]
