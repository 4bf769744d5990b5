"""Exception types shared across the package.

Two failure families matter to callers: bad configuration (rejected before
any physics runs) and numerical corruption detected mid-run. The CLI maps
them to distinct exit codes.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad field value, unknown key, malformed file."""


class NumericalError(RuntimeError):
    """Numerical corruption at runtime: broken norm, failed decomposition,
    zero-probability branch that cannot be continued."""
