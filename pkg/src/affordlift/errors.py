"""Exception types shared across the pipeline.

Every recoverable failure mode has a named class so callers (and the CLI)
can map failures to exit codes without parsing messages.  Stages may
attach a ``stage`` attribute when re-raising so errors stay typed while
still recording where they happened.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all pipeline errors."""

    stage: str | None = None

    def annotate(self, stage: str) -> "PipelineError":
        self.stage = stage
        return self


# -- camera geometry ------------------------------------------------------

class OutOfBounds(PipelineError):
    """A pixel coordinate lies outside the image footprint."""


class NoValidDepth(PipelineError):
    """No valid depth pixel inside the hole-search window."""


class BehindCamera(PipelineError):
    """A 3D point with z <= 0 cannot be projected."""


class DegenerateProjection(PipelineError):
    """A 3D direction projects to a near-zero image displacement."""


class EmptyCloud(PipelineError):
    """Depth image contains no valid (masked) pixel."""


class EmptyCrop(PipelineError):
    """No cloud point falls inside the crop ball."""


class InsufficientNeighbors(PipelineError):
    """Cloud too small for the requested neighborhood size."""


class DegenerateNeighborhood(PipelineError):
    """Neighborhood covariance has rank < 2 (no unique normal)."""


# -- binary file formats --------------------------------------------------

class BadMagic(PipelineError):
    """File does not start with the expected magic bytes."""


class TruncatedFile(PipelineError):
    """Payload length disagrees with the header."""


class DimensionMismatch(PipelineError):
    """Declared dimensions are invalid or inconsistent with paired data."""


# -- features and embeddings ----------------------------------------------

class EmptyMask(PipelineError):
    """A mask selects no usable grid cell or pixel."""


class ZeroVector(PipelineError):
    """A zero vector where a nonzero embedding/feature is required."""


# -- affordance memory ----------------------------------------------------

class NoContactEvent(PipelineError):
    """Gripper never closes in a robotic trajectory."""


class ProjectionOutOfImage(PipelineError):
    """The contact point projects outside the demonstration frame."""


class NoContactInMask(PipelineError):
    """No first-frame hand keypoint falls inside the object mask."""


class DegenerateAnnotation(PipelineError):
    """Custom annotation start and end points coincide."""


class ManifestParseError(PipelineError):
    """Memory manifest is not valid JSON or violates the schema."""


class MissingAsset(PipelineError):
    """A file referenced by the manifest does not exist."""


class DuplicateId(PipelineError):
    """Two memory entries share an id."""


# -- retrieval -------------------------------------------------------------

class EmptyMemory(PipelineError):
    """Retrieval against a memory with no entries."""


# -- 2D transfer ------------------------------------------------------------

class InsufficientPoints(PipelineError):
    """Fewer than two points supplied to the line fit."""


class DegenerateLine(PipelineError):
    """All candidate point pairs coincide; no line direction exists."""


class LowConfidenceTransfer(PipelineError):
    """Mean correspondence score fell below the confidence floor."""


# -- 3D lifting --------------------------------------------------------------

class AmbiguousDirection(PipelineError):
    """Every candidate direction projects degenerately."""


class NoGraspCandidates(PipelineError):
    """Grasp selection invoked with an empty candidate list."""


# -- synthetic scenes ---------------------------------------------------------

class PlaneNotVisible(PipelineError):
    """Synthetic plane is back-facing or behind the camera somewhere."""


class NonInvertibleWarp(PipelineError):
    """Affine warp matrix is singular."""
