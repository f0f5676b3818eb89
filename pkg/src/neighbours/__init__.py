"""Neighbours calculus: parser, type checker, device and network semantics."""
