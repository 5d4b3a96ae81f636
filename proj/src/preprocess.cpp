#include "annot/dsp.hpp"

#include "annot/error.hpp"

namespace annot::dsp {

PreprocessResult preprocess(const EegRecording& rec, const PreprocessConfig& cfg) {
  EegRecording work = rec;
  for (double f : cfg.notch_hz) work = notch_filter(work, f, cfg.notch_order);
  work = bandpass_filter(work, cfg.bandpass);

  PreprocessResult out;
  if (cfg.ica) {
    out.report.ica_ran = true;
    auto ica_cfg = cfg.ica_config;
    if (ica_cfg.n_components == 0) ica_cfg.n_components = work.n_channels();
    while (true) {
      try {
        const auto ica = fastica(work.samples, ica_cfg);
        out.report.ica_converged = true;
        out.report.ica_iterations = ica.iterations;
        out.report.ica_residual = ica.residual;
        out.report.ica_components = ica_cfg.n_components;
        const auto drop = reject_artifact_components(ica, work.layout, cfg.artifact_rule);
        out.report.removed_components.assign(drop.begin(), drop.end());
        work = remove_components(work, ica, drop);
        break;
      } catch (const Error& e) {
        // A non-converged or rank-deficient decomposition leaves the data as-is.
        if (e.code() != Errc::ConvergenceFailure && e.code() != Errc::RankDeficiency) throw;
        if (!out.report.note.empty()) out.report.note += "; ";
        out.report.note += std::to_string(ica_cfg.n_components) + " components: " + e.what();
        if (!cfg.ica_shrink_on_failure || ica_cfg.n_components <= 1) break;
        ica_cfg.n_components /= 2;
      }
    }
  }

  out.epochs = extract_epochs(work, cfg.window);
  if (cfg.baseline) out.epochs = baseline_correct(out.epochs);
  out.report.dropped_epochs = out.epochs.dropped;
  return out;
}

} // namespace annot::dsp
