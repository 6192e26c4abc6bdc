"""Frozen oracle values. Generated by scripts/make_reference_values.py."""

# (i, j) node on the 16 x 12 probe grid -> (J, A) by symbolic composition
J_PROBES = [
    ((8, 12), 1.0041415926535897, 0.0),
    ((10, 9), 1.0006451313222748, -0.0004274386204653327),
    ((5, 7), 1.000209575959449, 7.638907823056142e-05),
    ((2, 10), 0.9989179731597899, 0.0007596298982652802),
    ((8, 4), 1.0, 0.0),
]

# vertical Robin wavenumbers, k nu cos(nu H) + sin(nu H) = 0
HEAT_NU = [
    1.7312179832083296,
    3.589756292038675,
    5.552796313112805,
    7.570954502712171,
]

# six slowest conduction decay rates on the rest rectangle
HEAT_EIGS = [
    1.9125808819796897,
    4.503352037265646,
    5.373812967776259,
    7.964584123062216,
    8.82130396274224,
    11.655331798317023,
]

# (s, mode k, amplitude, squared H^s surface norm of a cos(k pi x/ell))
GS_CASES = [
    (0.5, 1, 1.0, 7.672606304530514),
    (0.5, 2, 0.7, 6.8292720042910835),
    (1.5, 1, 1.0, 77.72558895102031),
    (0.31, 1, 1.0, 5.097912625075036),
    (1.31, 2, 0.25, 18.053463915646205),
    (2.5, 1, 0.05, 1.9228020369706313),
]

# (tension jump, eta_lin(0), eta_lin(ell)) for the small-slope profile
LIN_EQ = [
    (0.001, -0.00014908187176067845, 0.0003130352854993313),
    (0.01, -0.0014908187176067846, 0.003130352854993313),
]
