"""Test Suite for Head Pose Tracker"""
