"""Exception types shared across the package."""


class GameError(ValueError):
    """A history or action is structurally invalid for the game."""


class IllegalActionError(GameError):
    """An action id outside the legal set was applied."""


class ContractViolation(RuntimeError):
    """An operation was called on a node of the wrong kind."""


class UndefinedValueError(ArithmeticError):
    """A quantity is undefined, e.g. a normalizer over an unreachable state."""


class MissingPolicyEntryError(KeyError):
    """A policy table lacks an info state that the evaluation reaches."""

    def __init__(self, key):
        super().__init__(key)
        self.key = key

    def __str__(self):
        return f"policy has no entry for info state {self.key!r}"


class IntegrationError(RuntimeError):
    """A dynamics trajectory left the simplex beyond the clamp tolerance."""
