"""Plain-grid raster layers in WGS84 and their file formats.

A GridLayer is a north-up, row-major grid: ``origin_lon/origin_lat`` is
the outer corner of the top-left pixel, rows advance southward. Two file
formats are supported: single-band GeoTIFF (georeferencing read from the
ModelPixelScale/ModelTiepoint tags, nodata from the GDAL nodata tag) and
ESRI ASCII grid. No reprojection is performed; layers must already be in
lon/lat degrees.

Pixel selection follows a pixel-center rule throughout: a pixel belongs
to a zone when its center point falls inside the zone polygon (even-odd
test). This keeps every zonal statistic reproducible by plain per-pixel
enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import points_in_rings, rings_bbox

# GeoTIFF / GDAL TIFF tag ids
TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_MODEL_TRANSFORMATION = 34264
TAG_GDAL_NODATA = 42113

SEMANTICS = ("class-coded", "continuous", "loss-year", "monthly-band")


@dataclass
class GridLayer:
    """One single-band raster grid with WGS84 georeferencing."""

    origin_lon: float
    origin_lat: float
    pixel_size_lon: float
    pixel_size_lat: float
    values: np.ndarray
    nodata: float | None = None
    semantics: str = "continuous"

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ConfigError(f"grid values must be 2-D, got shape {self.values.shape}")
        if self.pixel_size_lon <= 0 or self.pixel_size_lat <= 0:
            raise ConfigError("pixel sizes must be positive")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def center_lons(self) -> np.ndarray:
        return self.origin_lon + (np.arange(self.width) + 0.5) * self.pixel_size_lon

    def center_lats(self) -> np.ndarray:
        return self.origin_lat - (np.arange(self.height) + 0.5) * self.pixel_size_lat

    def valid_mask(self) -> np.ndarray:
        """True where the cell holds data (nodata and NaN excluded)."""
        if self.nodata is None:
            if np.issubdtype(self.values.dtype, np.floating):
                return ~np.isnan(self.values)
            return np.ones(self.values.shape, dtype=bool)
        if isinstance(self.nodata, float) and math.isnan(self.nodata):
            return ~np.isnan(self.values)
        mask = self.values != self.nodata
        if np.issubdtype(self.values.dtype, np.floating):
            mask &= ~np.isnan(self.values)
        return mask

    def extent(self) -> tuple:
        """(min lon, min lat, max lon, max lat) of the outer grid edges."""
        return (
            self.origin_lon,
            self.origin_lat - self.height * self.pixel_size_lat,
            self.origin_lon + self.width * self.pixel_size_lon,
            self.origin_lat,
        )


def zone_pixel_mask(layer: GridLayer, rings) -> np.ndarray:
    """Boolean (H, W) mask of pixels whose center lies inside the zone.

    Only the window under the zone's bounding box is tested; results are
    identical to testing every pixel because the containment test depends
    solely on the absolute center coordinates.
    """
    mask = np.zeros(layer.values.shape, dtype=bool)
    if not rings:
        return mask
    x0, y0, x1, y1 = rings_bbox(rings)
    lons = layer.center_lons()
    lats = layer.center_lats()
    c0 = int(np.searchsorted(lons, x0, side="left"))
    c1 = int(np.searchsorted(lons, x1, side="right"))
    # lats descend; search on the reversed axis
    r0 = int(np.searchsorted(-lats, -y1, side="left"))
    r1 = int(np.searchsorted(-lats, -y0, side="right"))
    if c0 >= c1 or r0 >= r1:
        return mask
    gx, gy = np.meshgrid(lons[c0:c1], lats[r0:r1])
    mask[r0:r1, c0:c1] = points_in_rings(gx, gy, rings)
    return mask


def nearest_cell(layer: GridLayer, lon: float, lat: float) -> tuple | None:
    """(row, col) of the cell containing the point, or None when outside.

    A point exactly on a cell boundary is assigned to the lower row/column
    index; points on the outer west/north edges fall into the first
    cell/row (there is no lower neighbour to take the tie).
    """
    tx = (lon - layer.origin_lon) / layer.pixel_size_lon
    ty = (layer.origin_lat - lat) / layer.pixel_size_lat
    if tx < 0.0 or tx > layer.width or ty < 0.0 or ty > layer.height:
        return None
    col = int(math.ceil(tx)) - 1
    row = int(math.ceil(ty)) - 1
    return max(row, 0), max(col, 0)


def _parse_geotiff_georef(tags) -> tuple:
    scale = tags.get(TAG_MODEL_PIXEL_SCALE)
    tie = tags.get(TAG_MODEL_TIEPOINT)
    if scale is not None and tie is not None:
        sx, sy = float(scale[0]), float(scale[1])
        i, j, _, x, y = (float(v) for v in tie[:5])
        return x - i * sx, y + j * sy, sx, sy
    transform = tags.get(TAG_MODEL_TRANSFORMATION)
    if transform is not None:
        t = [float(v) for v in transform]
        if t[1] != 0.0 or t[4] != 0.0:
            raise ConfigError("rotated GeoTIFF transforms are not supported")
        return t[3], t[7], t[0], -t[5]
    raise ConfigError("GeoTIFF lacks ModelPixelScale/ModelTiepoint georeferencing")


def read_geotiff(path, semantics: str = "continuous") -> GridLayer:
    """Read a single-band GeoTIFF. Rotated/sheared grids are rejected."""
    from PIL import Image

    with Image.open(path) as im:
        values = np.array(im)
        tags = im.tag_v2
    if values.ndim != 2:
        raise ConfigError(f"{path}: expected a single-band raster, got shape {values.shape}")
    origin_lon, origin_lat, sx, sy = _parse_geotiff_georef(tags)
    nodata_raw = tags.get(TAG_GDAL_NODATA)
    nodata = None
    if nodata_raw is not None:
        nodata = float(str(nodata_raw).strip())
        if np.issubdtype(values.dtype, np.integer):
            nodata = int(nodata)
    return GridLayer(origin_lon, origin_lat, sx, sy, values, nodata, semantics)


def write_geotiff(path, layer: GridLayer) -> None:
    from PIL import Image, TiffImagePlugin

    info = TiffImagePlugin.ImageFileDirectory_v2()
    info[TAG_MODEL_PIXEL_SCALE] = (layer.pixel_size_lon, layer.pixel_size_lat, 0.0)
    info[TAG_MODEL_TIEPOINT] = (0.0, 0.0, 0.0, layer.origin_lon, layer.origin_lat, 0.0)
    if layer.nodata is not None:
        info[TAG_GDAL_NODATA] = str(layer.nodata)
    Image.fromarray(layer.values).save(path, tiffinfo=info)


def read_ascii_grid(path, semantics: str = "continuous") -> GridLayer:
    """Read an ESRI ASCII grid (.asc); cells are square by definition."""
    header = {}
    data_start = 0
    with open(path) as f:
        lines = f.readlines()
    for i, line in enumerate(lines):
        parts = line.split()
        if len(parts) == 2 and parts[0].lower() in (
            "ncols",
            "nrows",
            "xllcorner",
            "yllcorner",
            "cellsize",
            "nodata_value",
        ):
            header[parts[0].lower()] = float(parts[1])
        else:
            data_start = i
            break
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise ConfigError(f"{path}: ASCII grid header missing {key}")
    ncols, nrows = int(header["ncols"]), int(header["nrows"])
    cell = header["cellsize"]
    values = np.loadtxt(lines[data_start:], dtype=np.float64).reshape(nrows, ncols)
    return GridLayer(
        origin_lon=header["xllcorner"],
        origin_lat=header["yllcorner"] + nrows * cell,
        pixel_size_lon=cell,
        pixel_size_lat=cell,
        values=values,
        nodata=header.get("nodata_value"),
        semantics=semantics,
    )


def write_ascii_grid(path, layer: GridLayer) -> None:
    if not math.isclose(layer.pixel_size_lon, layer.pixel_size_lat, rel_tol=1e-12):
        raise ConfigError("ASCII grids require square pixels")
    nodata = layer.nodata if layer.nodata is not None else -9999
    with open(path, "w") as f:
        f.write(f"ncols {layer.width}\n")
        f.write(f"nrows {layer.height}\n")
        f.write(f"xllcorner {layer.origin_lon!r}\n")
        f.write(f"yllcorner {layer.origin_lat - layer.height * layer.pixel_size_lat!r}\n")
        f.write(f"cellsize {layer.pixel_size_lon!r}\n")
        f.write(f"NODATA_value {nodata!r}\n")
        for row in layer.values:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_layer(path, semantics: str = "continuous") -> GridLayer:
    """Dispatch on file extension: .tif/.tiff or .asc."""
    suffix = Path(path).suffix.lower()
    if suffix in (".tif", ".tiff"):
        return read_geotiff(path, semantics)
    if suffix == ".asc":
        return read_ascii_grid(path, semantics)
    raise ConfigError(f"unsupported raster format: {path}")
