#!/usr/bin/env python3
"""Scalar reference values for the radio model, evaluated with the standard
library only. The acceptance suite checks the Rust implementation against
the numbers this script prints.

Usage: python3 oracles/radio_oracles.py
"""

import math

TX_POWER_DBM = 45.0
G_TX_DB = 10.0
G_RX_DB = 1.0
NOISE_DBM = -110.0
BANDWIDTH_HZ = 40e6


def path_loss_los(d_m, f_ghz):
    return 28.0 + 22.0 * math.log10(d_m) + 20.0 * math.log10(f_ghz)


def path_loss_nlos(d_m, f_ghz):
    return 32.4 + 30.0 * math.log10(d_m) + 20.0 * math.log10(f_ghz)


def single_ue_rate():
    """One UE alone in a 2.6 GHz cell 1 km away, line of sight, no fading,
    no interference."""
    rsrp_dbm = TX_POWER_DBM - path_loss_los(1000.0, 2.6) + G_TX_DB + G_RX_DB
    sinr = 10.0 ** ((rsrp_dbm - NOISE_DBM) / 10.0)
    return BANDWIDTH_HZ * math.log2(1.0 + sinr)


if __name__ == "__main__":
    print(f"path_loss_los(1000, 2.6) = {path_loss_los(1000.0, 2.6):.4f} dB")
    print(f"path_loss_nlos(500, 0.7) = {path_loss_nlos(500.0, 0.7):.4f} dB")
    print(f"single_ue_rate = {single_ue_rate():.4e} bit/s")
