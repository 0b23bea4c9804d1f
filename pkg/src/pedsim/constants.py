# c = 3e8 m/s makes dr = c / 2BW exactly 7.5 cm for BW = 2 GHz.
SPEED_OF_LIGHT = 3.0e8
VACUUM_PERMITTIVITY = 8.8541878128e-12

# Display threshold for exported signatures, dBsm.
DISPLAY_FLOOR_DB = -40.0
# Internal floor applied when converting zero magnitude to dB.
INTERNAL_FLOOR_DB = -300.0


def wavelength(f_c):
    return SPEED_OF_LIGHT / f_c
