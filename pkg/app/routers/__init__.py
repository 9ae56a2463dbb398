"""HTTP routers of the simulator service."""
