"""Exception types shared across the package."""


class LdisError(Exception):
    """Base class for all errors raised by this package."""


class CoordinateError(LdisError):
    """A coordinate is non-finite or outside the WGS84 lon/lat domain."""

    def __init__(self, message, ring=None, vertex=None, site_id=None):
        self.ring = ring
        self.vertex = vertex
        self.site_id = site_id
        prefix = f"site {site_id}: " if site_id else ""
        where = ""
        if ring is not None:
            where = f" (ring {ring}, vertex {vertex})"
        super().__init__(f"{prefix}{message}{where}")


class DegenerateGeometryError(LdisError):
    """Operation requires a valid polygon with non-zero area."""


class UnsupportedLatitudeError(LdisError):
    """Point buffering is not supported this close to a pole."""


class AnnulusConstructionError(LdisError):
    """The outward offset could not be resolved into an annular region."""


class DuplicateSiteIdError(LdisError):
    """Catalog ingestion found colliding site ids."""

    def __init__(self, collisions):
        self.collisions = sorted(collisions)
        super().__init__(f"duplicate site ids: {', '.join(self.collisions)}")


class DegeneratePanelError(LdisError):
    """A regression panel has an empty treatment/time cell."""


class InsufficientDataError(LdisError):
    """Not enough observations for the requested statistic."""


class ConfigError(LdisError):
    """A run configuration is missing or names a resource that does not exist."""
