"""Error taxonomy shared by every module.

DimensionError   shapes that cannot be reconciled (bad axes, channel mismatch)
ConfigError      invalid configuration before any computation happens
ContractError    a call that violates an operation's precondition
FormatError      malformed files (images, manifests, checkpoints)
"""


class DurnetError(Exception):
    pass


class DimensionError(DurnetError):
    pass


class ConfigError(DurnetError):
    pass


class ContractError(DurnetError):
    pass


class FormatError(DurnetError):
    pass
