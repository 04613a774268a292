"""Typed errors raised across the engine."""


class MuseError(Exception):
    """Base class for every engine-specific error."""


class ScriptValidationError(MuseError):
    """A decomposed script failed structural validation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class CommitOnFrozenIdentity(MuseError):
    """Attempted to overwrite an identity state that has been frozen."""


class UnknownVersion(MuseError):
    """A versioned read asked for a version the memory has not reached."""


class UnknownArtifact(MuseError):
    """An artifact reference does not resolve inside the run store."""


class InfeasibleLayout(MuseError):
    """The layout guardrail cannot satisfy its constraints on this input."""


class MissingSpeakerBox(MuseError):
    """Speaker-conditioned framing was requested without a speaker box."""


class UndecodableVideo(MuseError):
    """A video artifact could not be decoded to frames."""


class BackendUnavailable(MuseError):
    """A generation backend failed after exhausting its retries."""


class InvalidBackendResponse(MuseError):
    """A backend returned a payload that does not match its contract."""


class JudgeOutputUnparseable(MuseError):
    """The judge response failed schema validation even after a reprompt."""


class PlannerOutputUnparseable(MuseError):
    """The planner could not produce a valid script within its retries."""


class UnknownViolationKind(MuseError):
    """A violation kind has no entry in the revision dispatch table."""


class NoScorableAttempt(MuseError):
    """Every attempt in a loop errored before producing a score."""


class PreproductionFailed(MuseError):
    """Identity or style setup failed; the run cannot proceed."""


class DegenerateVariance(MuseError):
    """Correlation is undefined: fewer than 3 pairs or a constant column."""


class EmptyChangeList(MuseError):
    """Narrative state resolution needs at least one state change."""


class NoCrops(MuseError):
    """Identity metrics need at least one detected character crop."""
