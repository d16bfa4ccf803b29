"""Test suite for the fusemot tracker."""
