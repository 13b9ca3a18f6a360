"""End-to-end runs on the desk-scale synthetic setup."""
