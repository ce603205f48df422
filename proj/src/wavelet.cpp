// SPDX-License-Identifier: Apache-2.0
#include "npmixer/wavelet.hpp"

#include <algorithm>

namespace npmixer {
namespace {

// Analysis taps are the time-reversed decomposition filters of the usual
// tables, so that causal correlation followed by anti-causal synthesis is
// exactly invertible under circular boundaries.
const std::vector<FilterTaps>& filter_table() {
  static const std::vector<FilterTaps> table = {
    {"db1",
     {0.7071067811865476, 0.7071067811865476},
     {0.7071067811865476, -0.7071067811865476},
     {0.7071067811865476, 0.7071067811865476},
     {0.7071067811865476, -0.7071067811865476}},
    {"db2",
     {0.48296291314453416, 0.8365163037378079, 0.2241438680420134, -0.12940952255126037},
     {-0.12940952255126037, -0.2241438680420134, 0.8365163037378079, -0.48296291314453416},
     {0.48296291314453416, 0.8365163037378079, 0.2241438680420134, -0.12940952255126037},
     {-0.12940952255126037, -0.2241438680420134, 0.8365163037378079, -0.48296291314453416}},
    {"db3",
     {0.33267055295008263, 0.8068915093110925, 0.45987750211849154, -0.13501102001025458, -0.08544127388202666, 0.03522629188570953},
     {0.03522629188570953, 0.08544127388202666, -0.13501102001025458, -0.45987750211849154, 0.8068915093110925, -0.33267055295008263},
     {0.33267055295008263, 0.8068915093110925, 0.45987750211849154, -0.13501102001025458, -0.08544127388202666, 0.03522629188570953},
     {0.03522629188570953, 0.08544127388202666, -0.13501102001025458, -0.45987750211849154, 0.8068915093110925, -0.33267055295008263}},
    {"db4",
     {0.2303778133088965, 0.7148465705529157, 0.6308807679298589, -0.027983769416859854, -0.18703481171909309, 0.030841381835560764, 0.0328830116668852, -0.010597401785069032},
     {-0.010597401785069032, -0.0328830116668852, 0.030841381835560764, 0.18703481171909309, -0.027983769416859854, -0.6308807679298589, 0.7148465705529157, -0.2303778133088965},
     {0.2303778133088965, 0.7148465705529157, 0.6308807679298589, -0.027983769416859854, -0.18703481171909309, 0.030841381835560764, 0.0328830116668852, -0.010597401785069032},
     {-0.010597401785069032, -0.0328830116668852, 0.030841381835560764, 0.18703481171909309, -0.027983769416859854, -0.6308807679298589, 0.7148465705529157, -0.2303778133088965}},
    {"db5",
     {0.16010239797419293, 0.6038292697971896, 0.7243085284377729, 0.13842814590132074, -0.24229488706638203, -0.032244869584638375, 0.07757149384004572, -0.006241490212798274, -0.012580751999081999, 0.0033357252854737712},
     {0.0033357252854737712, 0.012580751999081999, -0.006241490212798274, -0.07757149384004572, -0.032244869584638375, 0.24229488706638203, 0.13842814590132074, -0.7243085284377729, 0.6038292697971896, -0.16010239797419293},
     {0.16010239797419293, 0.6038292697971896, 0.7243085284377729, 0.13842814590132074, -0.24229488706638203, -0.032244869584638375, 0.07757149384004572, -0.006241490212798274, -0.012580751999081999, 0.0033357252854737712},
     {0.0033357252854737712, 0.012580751999081999, -0.006241490212798274, -0.07757149384004572, -0.032244869584638375, 0.24229488706638203, 0.13842814590132074, -0.7243085284377729, 0.6038292697971896, -0.16010239797419293}},
    {"sym3",
     {0.3326705529509569, 0.8068915093133388, 0.4598775021193313, -0.13501102001039084, -0.08544127388224149, 0.035226291882100656},
     {0.035226291882100656, 0.08544127388224149, -0.13501102001039084, -0.4598775021193313, 0.8068915093133388, -0.3326705529509569},
     {0.3326705529509569, 0.8068915093133388, 0.4598775021193313, -0.13501102001039084, -0.08544127388224149, 0.035226291882100656},
     {0.035226291882100656, 0.08544127388224149, -0.13501102001039084, -0.4598775021193313, 0.8068915093133388, -0.3326705529509569}},
    {"sym4",
     {0.0322231006040427, -0.012603967262037833, -0.09921954357684722, 0.29785779560527736, 0.8037387518059161, 0.49761866763201545, -0.02963552764599851, -0.07576571478927333},
     {-0.07576571478927333, 0.02963552764599851, 0.49761866763201545, -0.8037387518059161, 0.29785779560527736, 0.09921954357684722, -0.012603967262037833, -0.0322231006040427},
     {0.0322231006040427, -0.012603967262037833, -0.09921954357684722, 0.29785779560527736, 0.8037387518059161, 0.49761866763201545, -0.02963552764599851, -0.07576571478927333},
     {-0.07576571478927333, 0.02963552764599851, 0.49761866763201545, -0.8037387518059161, 0.29785779560527736, 0.09921954357684722, -0.012603967262037833, -0.0322231006040427}},
    {"sym5",
     {0.019538882735286728, -0.021101834024758855, -0.17532808990845047, 0.01660210576452232, 0.6339789634582119, 0.7234076904024206, 0.1993975339773936, -0.039134249302383094, 0.029519490925774643, 0.027333068345077982},
     {0.027333068345077982, -0.029519490925774643, -0.039134249302383094, -0.1993975339773936, 0.7234076904024206, -0.6339789634582119, 0.01660210576452232, 0.17532808990845047, -0.021101834024758855, -0.019538882735286728},
     {0.019538882735286728, -0.021101834024758855, -0.17532808990845047, 0.01660210576452232, 0.6339789634582119, 0.7234076904024206, 0.1993975339773936, -0.039134249302383094, 0.029519490925774643, 0.027333068345077982},
     {0.027333068345077982, -0.029519490925774643, -0.039134249302383094, -0.1993975339773936, 0.7234076904024206, -0.6339789634582119, 0.01660210576452232, 0.17532808990845047, -0.021101834024758855, -0.019538882735286728}},
    {"coif5",
     {-0.000212081862067494, 0.0003585777411617577, 0.0021782943778456947, -0.00415931262757864, -0.010131584846900276, 0.023408322118927783, 0.028169744270532353, -0.09192158806008609, -0.052046670253554764, 0.42157126673075435, 0.7742936228603274, 0.4379823066591634, -0.06203775157498196, -0.10556315130733723, 0.041287530472117834, 0.032674799467057355, -0.019758391600965465, -0.009159507338676163, 0.006761520220620417, 0.0024315754425382886, -0.0016616273039298788, -0.0006375589261258812, 0.0003018579416682448, 0.00014035632812373243, -4.12198619242655e-05, -2.1270221672515614e-05, 3.7007277113394796e-06, 2.0612203985788783e-06, -1.6237995172048338e-07, -9.604010112767894e-08},
     {-9.604010112767894e-08, 1.6237995172048338e-07, 2.0612203985788783e-06, -3.7007277113394796e-06, -2.1270221672515614e-05, 4.12198619242655e-05, 0.00014035632812373243, -0.0003018579416682448, -0.0006375589261258812, 0.0016616273039298788, 0.0024315754425382886, -0.006761520220620417, -0.009159507338676163, 0.019758391600965465, 0.032674799467057355, -0.041287530472117834, -0.10556315130733723, 0.06203775157498196, 0.4379823066591634, -0.7742936228603274, 0.42157126673075435, 0.052046670253554764, -0.09192158806008609, -0.028169744270532353, 0.023408322118927783, 0.010131584846900276, -0.00415931262757864, -0.0021782943778456947, 0.0003585777411617577, 0.000212081862067494},
     {-0.000212081862067494, 0.0003585777411617577, 0.0021782943778456947, -0.00415931262757864, -0.010131584846900276, 0.023408322118927783, 0.028169744270532353, -0.09192158806008609, -0.052046670253554764, 0.42157126673075435, 0.7742936228603274, 0.4379823066591634, -0.06203775157498196, -0.10556315130733723, 0.041287530472117834, 0.032674799467057355, -0.019758391600965465, -0.009159507338676163, 0.006761520220620417, 0.0024315754425382886, -0.0016616273039298788, -0.0006375589261258812, 0.0003018579416682448, 0.00014035632812373243, -4.12198619242655e-05, -2.1270221672515614e-05, 3.7007277113394796e-06, 2.0612203985788783e-06, -1.6237995172048338e-07, -9.604010112767894e-08},
     {-9.604010112767894e-08, 1.6237995172048338e-07, 2.0612203985788783e-06, -3.7007277113394796e-06, -2.1270221672515614e-05, 4.12198619242655e-05, 0.00014035632812373243, -0.0003018579416682448, -0.0006375589261258812, 0.0016616273039298788, 0.0024315754425382886, -0.006761520220620417, -0.009159507338676163, 0.019758391600965465, 0.032674799467057355, -0.041287530472117834, -0.10556315130733723, 0.06203775157498196, 0.4379823066591634, -0.7742936228603274, 0.42157126673075435, 0.052046670253554764, -0.09192158806008609, -0.028169744270532353, 0.023408322118927783, 0.010131584846900276, -0.00415931262757864, -0.0021782943778456947, 0.0003585777411617577, 0.000212081862067494}},
    {"bior3.1",
     {-0.3535533905932738, 1.0606601717798212, 1.0606601717798212, -0.3535533905932738},
     {0.1767766952966369, -0.5303300858899106, 0.5303300858899106, -0.1767766952966369},
     {0.1767766952966369, 0.5303300858899106, 0.5303300858899106, 0.1767766952966369},
     {-0.3535533905932738, -1.0606601717798212, 1.0606601717798212, 0.3535533905932738}},
  };
  return table;
}

std::vector<double> padded(std::vector<double> v, std::size_t n) {
  v.resize(n, 0.0);
  return v;
}

template <typename T>
Tensor<T> filter_tensor(const std::vector<double>& taps, bool learnable) {
  const Shape shape{taps.size()};
  std::vector<T> v(taps.begin(), taps.end());
  if (learnable) return Tensor<T>::parameter(shape, std::move(v));
  return Tensor<T>(shape, std::move(v));
}

}  // namespace

const std::vector<std::string>& supported_wavelets() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : filter_table()) out.push_back(f.name);
    return out;
  }();
  return names;
}

FilterTaps reference_filters(const std::string& name) {
  for (const auto& f : filter_table()) {
    if (f.name != name) continue;
    const std::size_t n = std::max({f.h0.size(), f.h1.size(), f.g0.size(), f.g1.size()});
    return {f.name, padded(f.h0, n), padded(f.h1, n), padded(f.g0, n), padded(f.g1, n)};
  }
  std::string list;
  for (const auto& s : supported_wavelets()) list += (list.empty() ? "" : ", ") + s;
  throw ConfigError("unknown wavelet '" + name + "'; supported: " + list);
}

template <typename T>
WaveletFilterBank<T> init_filters(const std::string& name, bool learnable) {
  const FilterTaps taps = reference_filters(name);
  WaveletFilterBank<T> bank;
  bank.init_name = name;
  bank.h0 = filter_tensor<T>(taps.h0, learnable);
  bank.h1 = filter_tensor<T>(taps.h1, learnable);
  bank.g0 = filter_tensor<T>(taps.g0, learnable);
  bank.g1 = filter_tensor<T>(taps.g1, learnable);
  bank.w_init_lo = taps.h0;
  bank.w_init_hi = taps.h1;
  return bank;
}

template <typename T>
WaveletCoefficients<T> swt_decompose(const Tensor<T>& x, const WaveletFilterBank<T>& bank, std::size_t levels) {
  if (levels < 1) throw ParameterError("wavelet levels must be >= 1, got " + std::to_string(levels));
  if (x.rank() < 1 || x.dim(-1) < 1) throw DimensionError("swt input needs a non-empty last axis");
  WaveletCoefficients<T> out;
  Tensor<T> approx = x;
  std::size_t dilation = 1;
  for (std::size_t m = 1; m <= levels; ++m) {
    out.details.push_back(conv1d_dilated_circular(approx, bank.h1, dilation, ConvDirection::kCausal));
    approx = conv1d_dilated_circular(approx, bank.h0, dilation, ConvDirection::kCausal);
    dilation *= 2;
  }
  out.approx = approx;
  return out;
}

template <typename T>
Tensor<T> iswt_reconstruct(const WaveletCoefficients<T>& coeffs, const WaveletFilterBank<T>& bank,
                           std::size_t levels) {
  if (coeffs.levels() != levels) {
    throw ContractError("coefficients carry " + std::to_string(coeffs.levels()) + " detail levels, expected " +
                        std::to_string(levels));
  }
  if (levels < 1) throw ParameterError("wavelet levels must be >= 1");
  for (const auto& d : coeffs.details) {
    if (d.shape() != coeffs.approx.shape()) {
      throw DimensionError("detail band " + shape_str(d.shape()) + " does not match approximation " +
                           shape_str(coeffs.approx.shape()));
    }
  }
  Tensor<T> approx = coeffs.approx;
  for (std::size_t m = levels; m >= 1; --m) {
    const std::size_t dilation = std::size_t{1} << (m - 1);
    Tensor<T> lo = conv1d_dilated_circular(approx, bank.g0, dilation, ConvDirection::kAntiCausal);
    Tensor<T> hi = conv1d_dilated_circular(coeffs.details[m - 1], bank.g1, dilation, ConvDirection::kAntiCausal);
    approx = mul_scalar(add(lo, hi), T(0.5));
  }
  return approx;
}

template WaveletFilterBank<float> init_filters<float>(const std::string&, bool);
template WaveletFilterBank<double> init_filters<double>(const std::string&, bool);
template WaveletCoefficients<float> swt_decompose(const Tensor<float>&, const WaveletFilterBank<float>&, std::size_t);
template WaveletCoefficients<double> swt_decompose(const Tensor<double>&, const WaveletFilterBank<double>&,
                                                   std::size_t);
template Tensor<float> iswt_reconstruct(const WaveletCoefficients<float>&, const WaveletFilterBank<float>&,
                                        std::size_t);
template Tensor<double> iswt_reconstruct(const WaveletCoefficients<double>&, const WaveletFilterBank<double>&,
                                         std::size_t);

}  // namespace npmixer
