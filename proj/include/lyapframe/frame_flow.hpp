#pragma once

#include <string>
#include <vector>

#include "lyapframe/flow.hpp"
#include "lyapframe/gram_schmidt.hpp"
#include "lyapframe/qual_tape.hpp"

namespace lyapframe {

/// A point of the orthonormal frame bundle plus its growth ledger:
/// log_zeta_k is the accumulated log of the k-th Gram-Schmidt norm since
/// the start of the run.
struct OrthoFrameState {
    double t = 0.0;
    Vec x;
    Mat Q;
    Vec log_zeta;
};

/// Which way Gram-Schmidt order tracks growth rates along the run.
enum class FrameOrder {
    /// Forward evolution: frame direction k picks up the k-th largest rate.
    descending,
    /// Backward sweep along a stored orbit: direction k picks up the k-th
    /// smallest rate, i.e. the frame spans the slow filtration.
    ascending,
};

std::string to_string(FrameOrder order);

struct FrameRun {
    std::vector<OrthoFrameState> states;
    QualTape tape;
    FrameOrder order = FrameOrder::descending;

    const OrthoFrameState& final_state() const { return states.back(); }
};

/// omega_k = <q_k, DS(x) q_k>, the logarithmic growth rate of the k-th
/// Gram-Schmidt norm at t = 0.
Vec omega_values(const VectorFieldSpec& spec, const Vec& x, const Mat& q);

/// Strict-lower l x l matrix with r_jk = C_kj + C_jk (j > k), C = Q^T DS Q.
/// These are the off-diagonal entries of the transposed moving-frame
/// generator.
Mat coupling_values(const VectorFieldSpec& spec, const Vec& x, const Mat& q);

/// Upper-triangular generator U(C): diagonal C_kk, entries C_ij + C_ji above.
/// The frame obeys Q' = DS Q - Q U(C).
Mat frame_generator(const Mat& c);

struct FrameFlowOptions {
    int reorth_every = 10;
    /// Largest tolerated |Q^T Q - I|_max before a cleanup pass.
    double drift_limit = 1e-6;
};

/// Integrates the orthonormal frame flow for a duration T (negative T runs
/// backwards in time). The log_zeta ledger is integrated alongside the frame
/// and corrected by the Gram-Schmidt norms at each cleanup.
FrameRun evolve_frame(const VectorFieldSpec& spec, const Vec& x0, const Mat& q0, double duration,
                      const SolverConfig& cfg, FrameFlowOptions opts = {});

/// Continues a run from a previously returned state.
FrameRun evolve_frame(const VectorFieldSpec& spec, const OrthoFrameState& start, double duration,
                      const SolverConfig& cfg, FrameFlowOptions opts = {});

/// Frame run on [0, T] whose frame order is ascending.
///
/// The base orbit is integrated forward over [0, T + settle] and stored; the
/// frame is then integrated backwards from T + settle along the stored orbit
/// starting at `q_seed`. After the settle interval the k-th direction tracks
/// the k-th slowest growth rate, which is the frame the reduced triangular
/// system needs. States and tape are reported in increasing time with
/// log_zeta(0) = 0.
FrameRun evolve_frame_ascending(const VectorFieldSpec& spec, const Vec& x0, const Mat& q_seed, double duration,
                                double settle, const SolverConfig& cfg, FrameFlowOptions opts = {});

/// |log_zeta_k(T) - integral of omega_k over the tape|, per k.
Vec ledger_identity_residual(const FrameRun& run);

} // namespace lyapframe
