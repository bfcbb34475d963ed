"""clickdet: weakly supervised lidar 3D detection from BEV center clicks."""

__version__ = "0.1.0"

from .geometry import (Cuboid, CylinderProposal, Point, PointCloud, bev_iou,
                       canonicalize, iou_3d, points_in_cylinder)

__all__ = [
    "Cuboid", "CylinderProposal", "Point", "PointCloud",
    "bev_iou", "canonicalize", "iou_3d", "points_in_cylinder",
]
