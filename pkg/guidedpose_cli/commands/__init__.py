"""Command implementations for guidedpose_cli."""
