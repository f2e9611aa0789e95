from geosci.exporters.gpsviz import export_gps_visualizer, gps_visualizer_text
from geosci.exporters.kml import export_kml_earth, export_kml_maps, kml_document, kmz_archive, package_kmz
from geosci.exporters.pajek import (
    Coastline,
    MalformedNet,
    PajekProject,
    export_pajek,
    format_pajek,
    load_coastline,
    pajek_project,
    parse_pajek,
    read_pajek,
)
from geosci.exporters.projection import transform_from_unit, transform_to_unit

__all__ = [
    "Coastline",
    "MalformedNet",
    "PajekProject",
    "export_gps_visualizer",
    "export_kml_earth",
    "export_kml_maps",
    "export_pajek",
    "format_pajek",
    "gps_visualizer_text",
    "kml_document",
    "kmz_archive",
    "load_coastline",
    "package_kmz",
    "pajek_project",
    "parse_pajek",
    "read_pajek",
    "transform_from_unit",
    "transform_to_unit",
]
