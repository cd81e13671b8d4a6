#include "tma/model.hpp"

#include "tma/error.hpp"
#include "tma/imaging.hpp"

namespace tma {

void RetrievalModel::validate() const {
  if (!backend) fail(ErrorKind::Configuration, "retrieval model has no backend");
  if (resolution && *resolution < kMinResolution)
    fail(ErrorKind::InvalidResolution, "model resolution " + std::to_string(*resolution) +
                                           " below minimum " + std::to_string(kMinResolution));
  if (whitening && whitening->dim() != static_cast<std::size_t>(backend->output_channels()))
    fail(ErrorKind::Configuration, "whitening dimension does not match backend output");
}

std::string RetrievalModel::label() const {
  std::string s = "[" + (backend ? backend->name() : std::string("?")) + ", " + pooling.name() +
                  ", " + (resolution ? std::to_string(*resolution) : std::string("orig"));
  if (whitening) s += ", white";
  return s + "]";
}

Descriptor describe(const RetrievalModel& model, const Image& image) {
  model.validate();
  const Image input = model.resolution ? resample(image, *model.resolution) : image;
  const Descriptor d = pool(model.backend->forward(input), model.pooling);
  return model.whitening ? whiten(d, *model.whitening) : d;
}

}  // namespace tma
