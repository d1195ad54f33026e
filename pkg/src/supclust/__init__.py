"""Clustering by the self-updating process."""
