#
# This file is part of the ecgifoe package.
#


########################
#    Mesh tags         #
########################


class Region:
    """
    This class defines the region tags of triangles.
    """

    """
    Torso tissue:
    """
    TORSO = "TORSO"
    """
    Lung tissue (centroid inside a lung disk):
    """
    LUNG = "LUNG"
    """
    Myocardium of the fine heart mesh:
    """
    HEART = "HEART"

    ALL = (TORSO, LUNG, HEART)


class Marker:
    """
    This class defines the boundary edge markers.
    """

    """
    Epicardium, the boundary towards the heart:
    """
    HEART = "HEART"
    """
    Body surface:
    """
    OUTER = "OUTER"

    ALL = (HEART, OUTER)
