"""Error hierarchy for mwum-net.

Configuration problems derive from ``ConfigError`` and numeric failures from
``SolverError``; the command line maps them to exit codes 2 and 3.
"""


class MwumNetError(Exception):
    """Base class for every error raised by mwum-net."""


class ConfigError(MwumNetError):
    """Bad user input: topology, parameters or run configuration."""


class SolverError(MwumNetError):
    """A numeric routine could not produce a trustworthy answer."""


class MalformedConfig(ConfigError):
    """Topology or parameter document does not follow the schema."""


class CyclicRouting(ConfigError):
    """Routing matrix is not nilpotent."""


class UnservedQueue(ConfigError):
    """Some queue is not covered by any schedule."""


class LoadAssumptionViolated(ConfigError):
    """Offered load breaks 0 < rho < C or leaves a queue without load."""


class ScheduleSetTooLarge(ConfigError):
    """Monotone closure exceeds the enumeration cap."""


class InvalidHorizon(ConfigError):
    """Simulation or integration horizon is not a positive finite number."""


class SeedRequired(ConfigError):
    """A reproducible run was requested without a seed."""


class OutOfHorizon(ConfigError):
    """Requested time lies beyond the recorded trajectory."""


class Infeasible(SolverError):
    """Linear program has no feasible point."""


class Unbounded(SolverError):
    """Linear program objective is unbounded below."""


class NotCritical(SolverError):
    """Operation needs a critically loaded system (Leff = 1)."""


class EnumerationLimitExceeded(SolverError):
    """Basis enumeration hit its cap."""


class NoConvergence(SolverError):
    """Iterative solver stopped at its iteration limit."""


class StepTooLarge(SolverError):
    """Fluid step is larger than the integrator tolerates."""
