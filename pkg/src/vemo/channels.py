"""Channel layout shared by telemetry files, datasets and the network.

Records are 8-vectors ordered controls first, then states, matching the CSV
header ``t,u_t,u_b,u_s,u_g,a_x,a_y,yaw_rate,v_x``.
"""

CONTROL_CHANNELS = ("u_t", "u_b", "u_s", "u_g")
STATE_CHANNELS = ("a_x", "a_y", "yaw_rate", "v_x")
ALL_CHANNELS = CONTROL_CHANNELS + STATE_CHANNELS

N_CONTROLS = len(CONTROL_CHANNELS)
N_STATES = len(STATE_CHANNELS)
N_CHANNELS = len(ALL_CHANNELS)

# slice of the 8-channel record holding the state vector
STATE_SLICE = slice(N_CONTROLS, N_CHANNELS)

UNITS = {
    "u_t": "%",
    "u_b": "%",
    "u_s": "deg",
    "u_g": "-",
    "a_x": "m/s^2",
    "a_y": "m/s^2",
    "yaw_rate": "deg/s",
    "v_x": "km/h",
}
