#!/usr/bin/env python3
# -*- coding: utf-8 -*-


name = "podtann"

__version__ = "0.1.0"
