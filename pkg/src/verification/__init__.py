"""
Correctness machinery: reference oracle, structural auditor, scripted
interleavings and the stress runner.
"""

from .auditor import AuditReport, audit
from .interleaving import ScriptStep, TraceEvent, compatibility_script, scripted_interleaving
from .oracle import OracleLog, OracleRecord, oracle_replay
from .stress import OpMix, StressResult, stress

__all__ = [
    'AuditReport', 'audit',
    'ScriptStep', 'TraceEvent', 'compatibility_script', 'scripted_interleaving',
    'OracleLog', 'OracleRecord', 'oracle_replay',
    'OpMix', 'StressResult', 'stress',
]
