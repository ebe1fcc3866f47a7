"""Kernel-side plugin implementations, loadable from the manifest."""
