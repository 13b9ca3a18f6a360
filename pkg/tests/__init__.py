"""Test suite for compenkit."""
