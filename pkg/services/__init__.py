from .scenario_service import Scenario, load_scenario, parse_scenario
from .generator import generate_scenario, write_scenario
from .report_writer import ReportWriter, read_report
from .invariant_suite import InvariantResult, InvariantSuite, SuiteReport, summarize

__all__ = [
    'Scenario', 'load_scenario', 'parse_scenario', 'generate_scenario', 'write_scenario',
    'ReportWriter', 'read_report', 'InvariantResult', 'InvariantSuite', 'SuiteReport', 'summarize',
]
