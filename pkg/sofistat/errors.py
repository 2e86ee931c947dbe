"""
Exception hierarchy shared by the library and the command-line runner.

Every error carries the exit code the CLI reports for it.
"""

from __future__ import annotations


class SofistatError(Exception):
    """Base class for all errors raised by sofistat."""

    exit_code: int = 1


class InputError(SofistatError, ValueError):
    """Malformed or inconsistent input (words, partitions, actions, configs)."""

    exit_code = 2


class UnsupportedPartitionError(InputError):
    """A partition kind the measure model cannot evaluate exactly."""


class BudgetError(SofistatError):
    """An exact search or a carrier would exceed its configured budget."""

    exit_code = 3


class InfeasibleError(SofistatError):
    """The requested construction cannot be carried out with the given parameters."""

    exit_code = 4
