from .energy import (DissipationObserver, EnergyIdentityObserver, ResidualEnergyObserver,
                     cauchy_time, delta_dissip, energy_density, residual_energy,
                     weighted_energy)
from .firewall import (EscapeTracker, FirewallAuditReport, FirewallConfig, FirewallSamples,
                       audit_escape_implication, audit_firewall_decay, audit_invasion_bound,
                       calibrate_slack, deviation, escape_measure, escape_point, escape_set,
                       firewall_F0, firewall_density, firewall_profile, hull_noesc, r_esc_hull,
                       r_hom_edge, sample_firewall, speed_estimate, weight_T_rho_psi0)
from .frames import (FrameSeries, StandingFrameConfig, StandingSeries, TravelingFrameConfig,
                     audit_standing_firewall, chi_pollution_factor, chi_sf, chi_tf, psi_sf,
                     psi_sf_curvature_factor, psi_tf, standing_frame_series,
                     standing_firewall_constant, traveling_frame_series)
