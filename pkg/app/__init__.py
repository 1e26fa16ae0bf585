"""lanefrm: lane-conditioned interaction modeling for trajectory prediction."""
