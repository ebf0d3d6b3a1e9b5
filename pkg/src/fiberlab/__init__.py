"""fiberlab: a desk-scale coherent optical fiber transmission laboratory.

Subsystems
----------
signals     waveform primitives (pulse shaping, WDM, power control)
channel     split-step Manakov forward propagation, EDFA, phase noise
dbp         CDC / DBP / ESSFM / CB-ESSFM equalizers and complexity accounting
shaping     sphere shaping, CCDM, Maxwell-Boltzmann sampling, PAS framing
seqsel      bit-scramble sequence selection with nonlinearity metrics
rxdsp       phase recovery, SNR, achievable-rate and SE estimation
experiment  configuration, deterministic sweeps, results persistence
"""

from .signals import (Signal, Constellation, PulseConfig, rrc_shape,
                      matched_filter_sample, wdm_mux, wdm_demux, set_power,
                      mean_power, resample, freq_shift, simulation_sps,
                      uniform_qam64)
from .channel import LinkConfig, StepPlan, ssfm_forward, edfa_amplify, \
    apply_phase_noise, awgn
from .dbp import (DbpConfig, ComplexityReport, cdc, dbp_ssfm, essfm_backprop,
                  essfm_forward, train_essfm, complexity_rm2d,
                  ssfm_equivalent_coeffs)
from .shaping import (DmConfig, ShapingFrame, EssCodec, CcdmCodec, ess_codec,
                      ess_min_emax, mb_probs, mb_fit_nu, mb_sample, pas_map,
                      pas_demap_hard, build_pas_frame, shaped_qam64)
from .seqsel import (SelectionConfig, CandidateSet, generate_candidates,
                     metric_nli, metric_energy_var, select, rate_loss)
from .rxdsp import (CprConfig, AirReport, mean_phase_remove, bps_cpr,
                    air_estimate, effective_snr)

__version__ = "0.1.0"
