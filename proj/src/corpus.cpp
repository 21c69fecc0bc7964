// SPDX-License-Identifier: Apache-2.0
#include "gmt/datasets.hpp"

namespace gmt {

std::string_view embedded_corpus() {
  static constexpr std::string_view kText =
      "the old lighthouse stood at the end of the harbor wall, and every evening the keeper "
      "climbed the narrow stairs to light the lamp. the stairs were worn in the middle where "
      "many feet had passed before his. from the top he could see the fishing boats coming "
      "home, the gulls following close behind them, and the long line of the coast fading "
      "into the grey water. he kept a small book in his pocket and wrote down the weather, "
      "the wind, and the names of the boats that came in late. on calm nights the sea was "
      "so quiet that he could hear the bell of the church across the bay. on rough nights "
      "the waves broke over the wall and the salt spray reached the glass of the lamp room, "
      "and he would wipe it clean with a soft cloth so the light would carry far. "
      "in the spring the town held a market in the square below. farmers brought eggs and "
      "bread and early green beans, and the children ran between the stalls with paper "
      "kites. the baker sold round loaves with a cross cut into the top, and the smell of "
      "them filled the street before the sun was fully up. the keeper bought one loaf each "
      "week and carried it home under his arm. he liked to eat it with butter and a little "
      "honey while he read the old letters his sister had sent from the city. she wrote "
      "about trains and tall buildings and the noise that never stopped, and he wrote back "
      "about the tide, the birds, and the slow turning of the light. "
      "one winter a storm came that lasted three days. the boats stayed in the harbor and "
      "the market was empty. the keeper did not sleep much. he watched the lamp, trimmed "
      "the wick, and checked the clockwork that turned the lens. on the second night a "
      "small boat appeared out of the dark, far from where any boat should be. he saw its "
      "lantern rise and fall on the waves. he kept the light turning, steady and bright, "
      "and after a long hour the little boat found the mouth of the harbor and came inside "
      "the wall where the water was calm. in the morning a young man knocked on the door "
      "of the lighthouse. he had come to say thank you, and he brought a jar of plums "
      "from his mother. the keeper made tea and they sat by the stove and talked about the "
      "sea until the wind began to fall. "
      "years later the lamp was changed for an electric one that turned by itself, and the "
      "keeper was told he could rest. he moved to a small house near the market square. "
      "every evening he still walked to the end of the harbor wall and watched the light "
      "come on, and every week he bought a round loaf from the baker, and every spring he "
      "wrote to his sister about the birds coming back to the cliffs. the young man from "
      "the storm became a fisherman with a boat of his own, and when he came home late he "
      "always looked first for the light, and then for the small figure standing on the "
      "wall, who raised one hand as the boat passed by. ";
  return kText;
}

}  // namespace gmt
