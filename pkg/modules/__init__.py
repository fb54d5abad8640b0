"""Application modules package."""
